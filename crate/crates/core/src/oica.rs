//! Likelihood-free overcomplete ICA.
//!
//! The generator mixes `d` independent learned sources through a `p × d`
//! matrix `A`; `A` and the source parameters are fitted by minimizing the
//! MMD between generated and observed mixtures, optionally with an L1
//! proximal step on `A` after every optimizer update.
//!
//! The minibatch loop in [`optimize`] is shared with the causal trainers.

use alloc::format;
use alloc::vec::Vec;

use crate::diffcore::{prox_l1, Adam, AdamConfig, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};
use crate::mmd::{self, Estimator, KernelSpec, DEFAULT_MULTIPLIERS};
use crate::rng::{self, streams, RunRng};
use crate::sources::{SourceConfig, SourceGenerator, SourceKind};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelOptions {
    /// Multipliers applied to the median squared distance of the data.
    pub multipliers: Vec<f64>,
    pub estimator: Estimator,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            estimator: Estimator::Biased,
        }
    }
}

impl KernelOptions {
    /// Median-heuristic kernel on `samples`.
    pub fn fit(&self, samples: &Matrix) -> Result<(KernelSpec, bool)> {
        KernelSpec::median_scaled(samples, &self.multipliers, self.estimator)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Observed samples per minibatch.
    pub batch: usize,
    /// Generated samples per minibatch; `None` uses `batch`.
    pub gen_batch: Option<usize>,
    pub iters: usize,
    pub adam: AdamConfig,
    /// L1 weight on the structural matrix; the prox threshold is `λ·lr`.
    pub lambda: f64,
    /// Learning rate at the last iteration as a fraction of the initial one
    /// (linear schedule); `1.0` keeps it constant.
    pub final_lr_ratio: f64,
    pub kernel: KernelOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 256,
            gen_batch: None,
            iters: 2000,
            adam: AdamConfig::default(),
            lambda: 0.0,
            final_lr_ratio: 1.0,
            kernel: KernelOptions::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::invalid("batch must be >= 2"));
        }
        if self.gen_batch.is_some_and(|g| g < 2) {
            return Err(Error::invalid("gen_batch must be >= 2"));
        }
        if self.iters == 0 {
            return Err(Error::invalid("iters must be >= 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if !(self.final_lr_ratio > 0.0 && self.final_lr_ratio <= 1.0) {
            return Err(Error::invalid("final_lr_ratio must be in (0, 1]"));
        }
        if self.kernel.multipliers.is_empty() || self.kernel.multipliers.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::invalid("kernel multipliers must be positive"));
        }
        self.adam.validate()
    }

    pub fn gen_batch(&self) -> usize {
        self.gen_batch.unwrap_or(self.batch)
    }

    fn lr_at(&self, iter: usize) -> f64 {
        if self.iters <= 1 {
            return self.adam.lr;
        }
        let frac = iter as f64 / (self.iters - 1) as f64;
        self.adam.lr * (1.0 - (1.0 - self.final_lr_ratio) * frac)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// One loss value per iteration, recorded before the update.
    pub loss_trace: Vec<f64>,
    /// Bandwidths (σ²) used for each tuple slot.
    pub bandwidths: Vec<Vec<f64>>,
    /// Whether any median heuristic fell back because all samples coincided.
    pub degenerate_bandwidth: bool,
}

/// Draws minibatches without replacement, reshuffling when an epoch runs
/// out of unseen items.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: RunRng,
}

impl BatchSampler {
    pub fn new(n: usize, mut rng: RunRng) -> Self {
        let order = rng::permutation(n, &mut rng);
        BatchSampler { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, batch: usize) -> Vec<usize> {
        let n = self.order.len();
        assert!(batch <= n, "batch larger than population");
        if self.pos + batch > n {
            self.order = rng::permutation(n, &mut self.rng);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + batch].to_vec();
        self.pos += batch;
        out
    }
}

/// Columns `idx` of `m`.
pub fn gather_columns(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Adam loop: `loss_fn` builds the loss for one iteration, `project` runs
/// after every optimizer step with the current learning rate.
pub fn optimize<F, P>(
    store: &mut ParamStore,
    cfg: &TrainConfig,
    mut loss_fn: F,
    mut project: P,
) -> Result<Vec<f64>>
where
    F: FnMut(&mut Tape, &ParamStore, usize) -> Result<Var>,
    P: FnMut(&mut ParamStore, f64) -> Result<()>,
{
    cfg.validate()?;
    let mut adam = Adam::new(store, cfg.adam)?;
    let mut trace = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let lr = cfg.lr_at(it);
        adam.set_lr(lr);
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store, it).map_err(|e| e.at_iteration(it))?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Divergence {
                param: "loss".into(),
                iteration: Some(it),
            });
        }
        trace.push(value);
        store.zero_grad();
        tape.backward(loss, store).map_err(|e| e.at_iteration(it))?;
        adam.step(store).map_err(|e| e.at_iteration(it))?;
        project(store, lr).map_err(|e| e.at_iteration(it))?;
    }
    Ok(trace)
}

pub(crate) fn check_data(data: &Matrix, rows: usize, what: &str) -> Result<()> {
    if data.nrows() != rows {
        return Err(Error::ShapeMismatch {
            op: "train",
            expected: (rows, data.ncols()),
            found: data.shape(),
        });
    }
    if !all_finite(data) {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Initial value of the mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingInit {
    /// Entries i.i.d. uniform on `(−half_width, half_width)`.
    Uniform { half_width: f64 },
    /// Ground truth plus i.i.d. Gaussian noise of standard deviation `noise_sd`.
    Oracle { truth: Matrix, noise_sd: f64 },
    Given(Matrix),
}

impl Default for MixingInit {
    fn default() -> Self {
        MixingInit::Uniform { half_width: 0.5 }
    }
}

impl MixingInit {
    pub fn build(&self, p: usize, d: usize, rng: &mut RunRng) -> Result<Matrix> {
        let a = match self {
            MixingInit::Uniform { half_width } => rng::uniform(p, d, -half_width, *half_width, rng),
            MixingInit::Oracle { truth, noise_sd } => {
                truth + rng::standard_normal(truth.nrows(), truth.ncols(), rng) * *noise_sd
            }
            MixingInit::Given(m) => m.clone(),
        };
        if a.shape() != (p, d) {
            return Err(Error::ShapeMismatch {
                op: "mixing_init",
                expected: (p, d),
                found: a.shape(),
            });
        }
        Ok(a)
    }
}

#[derive(Debug, Clone)]
pub struct OicaModel {
    pub mixing: ParamId,
    pub sources: SourceGenerator,
    p: usize,
    d: usize,
}

impl OicaModel {
    /// `kind` must already be resolved (not [`SourceKind::Auto`]).
    pub fn new(
        store: &mut ParamStore,
        p: usize,
        d: usize,
        kind: SourceKind,
        source_cfg: &SourceConfig,
        init: &MixingInit,
        seed: u64,
    ) -> Result<Self> {
        if p == 0 || d < p {
            return Err(Error::invalid(format!("need 1 <= p <= d, got p={p}, d={d}")));
        }
        let a = init.build(p, d, &mut rng::stream(seed, streams::INIT))?;
        let mixing = store.add("A", a);
        let sources = SourceGenerator::build(store, "src", d, kind, source_cfg, seed)?;
        Ok(OicaModel {
            mixing,
            sources,
            p,
            d,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mixing_matrix(&self, store: &ParamStore) -> Matrix {
        store.value(self.mixing).clone()
    }

    /// Generated mixtures `A·ŝ` for `batch` fresh noise columns.
    pub fn generate(&self, tape: &mut Tape, store: &ParamStore, batch: usize, rng: &mut RunRng) -> Result<Var> {
        let noise = self.sources.draw_noise(batch, rng);
        let s = self.sources.sample(tape, store, &noise)?;
        let a = tape.param(store, self.mixing);
        mix(tape, a, s)
    }
}

/// `x̂ = A·ŝ`.
pub fn mix(tape: &mut Tape, a: Var, sources: Var) -> Result<Var> {
    let (ad, sd) = (tape.value(a).ncols(), tape.value(sources).nrows());
    if ad != sd {
        return Err(Error::ShapeMismatch {
            op: "mix",
            expected: (ad, tape.value(sources).ncols()),
            found: tape.value(sources).shape(),
        });
    }
    Ok(tape.matmul(a, sources))
}

/// Fit `model` to the columns of `data` (`p × N`).
pub fn train_lfoica(
    model: &OicaModel,
    store: &mut ParamStore,
    data: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(data, model.p, "data")?;
    if data.ncols() < cfg.batch {
        return Err(Error::invalid(format!(
            "need at least batch={} observations, got {}",
            cfg.batch,
            data.ncols()
        )));
    }
    let mut bw_sampler = BatchSampler::new(data.ncols(), rng::stream(cfg.seed, streams::BANDWIDTH));
    let (kernel, degenerate) = cfg.kernel.fit(&gather_columns(data, &bw_sampler.next_batch(cfg.batch)))?;
    let mut batches = BatchSampler::new(data.ncols(), rng::stream(cfg.seed, streams::BATCH));
    let mut noise_rng = rng::stream(cfg.seed, streams::NOISE);
    let gen_batch = cfg.gen_batch();
    let lambda = cfg.lambda;
    let mixing = model.mixing;
    let loss_trace = optimize(
        store,
        cfg,
        |tape, store, _| {
            let real = gather_columns(data, &batches.next_batch(cfg.batch));
            let fake = model.generate(tape, store, gen_batch, &mut noise_rng)?;
            mmd::mmd2(tape, &real, fake, &kernel)
        },
        |store, lr| {
            if lambda > 0.0 {
                let a = prox_l1(store.value(mixing), lambda * lr)?;
                store.set_value(mixing, a);
            }
            Ok(())
        },
    )?;
    Ok(TrainReport {
        loss_trace,
        bandwidths: alloc::vec![kernel.bandwidths().to_vec()],
        degenerate_bandwidth: degenerate,
    })
}
