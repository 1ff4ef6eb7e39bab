//! Causal discovery as constrained overcomplete ICA.
//!
//! * Measurement error: `X = (I − B)⁻¹·Ẽ + E`, i.e. mixing `[(I − B)⁻¹ I]`
//!   with a zero-diagonal adjacency `B`.
//! * Subsampled VAR(1): every `k`-th state of `x_t = C·x_{t−1} + e_t` is
//!   observed, so `x̃_{t+1} = Cᵏ·x̃_t + L·ẽ` with `L = [I, C, …, C^{k−1}]`.
//!   The transition is fitted by matching the joint law of consecutive
//!   observed pairs with a conditional generator.
//! * Aggregated VAR(1): block means of `k` states follow
//!   `x̃_t = Cᵏ·x̃_{t−1} + M₀·ε_t + M₁·ε_{t−1}`. Non-overlapping pieces of
//!   `l` observations are matched jointly after a recursive rollout from
//!   each piece's first observation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::{prox_l1, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::evalign;
use crate::ica;
use crate::linalg::{self, Matrix};
use crate::mmd::{self, KernelSpec};
use crate::oica::{check_data, gather_columns, optimize, BatchSampler, TrainConfig, TrainReport};
use crate::rng::{self, streams, RunRng};
use crate::sources::{SourceConfig, SourceGenerator, SourceKind};

pub use crate::linalg::matrix_power;

/// Largest accepted condition number of `I − B`.
pub const CONDITION_LIMIT: f64 = 1e8;

/// `[(I − B)⁻¹ I]`, an `n × 2n` matrix.
pub fn measurement_mixing(b: &Matrix) -> Result<Matrix> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::ShapeMismatch {
            op: "measurement_mixing",
            expected: (n, n),
            found: b.shape(),
        });
    }
    let inv = guarded_inverse(b)?;
    let mut out = Matrix::zeros(n, 2 * n);
    out.columns_mut(0, n).copy_from(&inv);
    out.columns_mut(n, n).fill_with_identity();
    Ok(out)
}

fn guarded_inverse(b: &Matrix) -> Result<Matrix> {
    let n = b.nrows();
    let (inv, cond) = linalg::inverse_with_condition(&(Matrix::identity(n, n) - b))?;
    if cond > CONDITION_LIMIT {
        return Err(Error::Singular { condition: cond });
    }
    Ok(inv)
}

/// `[I, C, C², …, C^{k−1}]`.
pub fn build_l(c: &Matrix, k: usize) -> Result<Matrix> {
    let n = square(c, "build_l")?;
    if k == 0 {
        return Err(Error::invalid("factor k must be >= 1"));
    }
    let mut out = Matrix::zeros(n, n * k);
    let mut power = Matrix::identity(n, n);
    for j in 0..k {
        out.columns_mut(j * n, n).copy_from(&power);
        power = c * &power;
    }
    Ok(out)
}

/// Moving-average matrices of the aggregated process: block `j` of `M₀` is
/// `Σ_{i≤j} Cⁱ`, block `j` of `M₁` is `Σ_{j<i<k} Cⁱ`.
pub fn build_m0_m1(c: &Matrix, k: usize) -> Result<(Matrix, Matrix)> {
    let n = square(c, "build_m0_m1")?;
    if k == 0 {
        return Err(Error::invalid("factor k must be >= 1"));
    }
    let l = build_l(c, k)?;
    let mut total = Matrix::zeros(n, n);
    for j in 0..k {
        total += l.columns(j * n, n);
    }
    let mut m0 = Matrix::zeros(n, n * k);
    let mut m1 = Matrix::zeros(n, n * k);
    let mut partial = Matrix::zeros(n, n);
    for j in 0..k {
        partial += l.columns(j * n, n);
        m0.columns_mut(j * n, n).copy_from(&partial);
        m1.columns_mut(j * n, n).copy_from(&(&total - &partial));
    }
    Ok((m0, m1))
}

fn square(c: &Matrix, op: &'static str) -> Result<usize> {
    let n = c.nrows();
    if c.ncols() != n || n == 0 {
        return Err(Error::ShapeMismatch {
            op,
            expected: (n, n),
            found: c.shape(),
        });
    }
    Ok(n)
}

/// `[C⁰, C¹, …, C^upto]` on the tape.
fn tape_powers(tape: &mut Tape, c: Var, n: usize, upto: usize) -> Vec<Var> {
    let mut out = Vec::with_capacity(upto + 1);
    out.push(tape.constant(Matrix::identity(n, n)));
    if upto >= 1 {
        out.push(c);
    }
    for _ in 2..=upto {
        let prev = *out.last().unwrap();
        out.push(tape.matmul(c, prev));
    }
    out
}

/// `Σ_j W_j·noise_j` where `noise_j` is the `j`-th block of `n` rows.
fn block_apply(tape: &mut Tape, weights: &[Var], noise: Var, n: usize) -> Var {
    let mut acc: Option<Var> = None;
    for (j, w) in weights.iter().enumerate() {
        let block = tape.slice_rows(noise, j * n, n);
        let term = tape.matmul(*w, block);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    acc.expect("at least one block")
}

/// Initial transition matrix for the VAR trainers.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionInit {
    Zero,
    /// Entries i.i.d. uniform on `(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    Given(Matrix),
}

impl Default for TransitionInit {
    fn default() -> Self {
        TransitionInit::Uniform { lo: 0.0, hi: 0.5 }
    }
}

impl TransitionInit {
    fn build(&self, n: usize, rng: &mut RunRng) -> Result<Matrix> {
        let c = match self {
            TransitionInit::Zero => Matrix::zeros(n, n),
            TransitionInit::Uniform { lo, hi } => rng::uniform(n, n, *lo, *hi, rng),
            TransitionInit::Given(m) => m.clone(),
        };
        if c.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                op: "transition_init",
                expected: (n, n),
                found: c.shape(),
            });
        }
        Ok(c)
    }
}

/// Moment-based starting point for `C`: the principal `k`-th root of the
/// least-squares VAR(1) coefficient of the observed series `n × T`.
///
/// `None` when the regression is singular or the root does not exist.
pub fn moment_transition(series: &Matrix, k: usize) -> Option<Matrix> {
    let t = series.ncols();
    if t < 2 || k == 0 {
        return None;
    }
    let x = series.columns(0, t - 1);
    let y = series.columns(1, t - 1);
    let xxt = &x * x.transpose();
    let ck = (&y * x.transpose()) * xxt.try_inverse()?;
    linalg::principal_root(&ck, u32::try_from(k).ok()?)
}

/// ICA-based starting point for `B` from observations `n × N`.
///
/// The FastICA unmixing matrix estimates `I − B` up to row order and
/// scale; rows are permuted to make the diagonal as large as possible
/// (minimum `Σ 1/|w_ii|` assignment), scaled to a unit diagonal and
/// subtracted from `I`. `None` when FastICA fails.
pub fn ica_adjacency_start(data: &Matrix, seed: u64) -> Option<Matrix> {
    let n = data.nrows();
    let fit = ica::fastica(data, &ica::FastIcaOptions::default(), &mut rng::stream(seed, streams::INIT)).ok()?;
    let u = fit.unmixing;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 / libm::fabs(u[(i, j)]).max(1e-300)).collect())
        .collect();
    let pos = evalign::assign(&cost);
    let mut w = Matrix::zeros(n, n);
    for (i, &j) in pos.iter().enumerate() {
        let row = u.row(i) / u[(i, j)];
        w.set_row(j, &row);
    }
    let mut b = Matrix::identity(n, n) - w;
    b.fill_diagonal(0.0);
    linalg::all_finite(&b).then_some(b)
}

/// Linear non-Gaussian causal model observed with Gaussian error.
#[derive(Debug, Clone)]
pub struct MeasurementErrorModel {
    pub b: ParamId,
    /// `n × 1` log standard deviations of the measurement error.
    pub log_noise_scale: ParamId,
    pub sources: SourceGenerator,
    n: usize,
}

impl MeasurementErrorModel {
    /// `B` starts at zero and the error scales at 0.1.
    pub fn new(
        store: &mut ParamStore,
        n: usize,
        kind: SourceKind,
        source_cfg: &SourceConfig,
        seed: u64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("measurement-error model needs n >= 2"));
        }
        let b = store.add("B", Matrix::zeros(n, n));
        let log_noise_scale = store.add(
            "log_noise_scale",
            Matrix::from_element(n, 1, libm::log(0.1)),
        );
        let sources = SourceGenerator::build(store, "tilde", n, kind, source_cfg, seed)?;
        Ok(MeasurementErrorModel {
            b,
            log_noise_scale,
            sources,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self, store: &ParamStore) -> Matrix {
        store.value(self.b).clone()
    }

    /// `x̂ = (I − B)⁻¹·ŝ + diag(σ)·ε` for `batch` fresh draws.
    pub fn generate(&self, tape: &mut Tape, store: &ParamStore, batch: usize, rng: &mut RunRng) -> Result<Var> {
        guarded_inverse(store.value(self.b))?;
        let noise = self.sources.draw_noise(batch, rng);
        let s = self.sources.sample(tape, store, &noise)?;
        let eps = tape.constant(rng::standard_normal(self.n, batch, rng));
        let eye = tape.constant(Matrix::identity(self.n, self.n));
        let b = tape.param(store, self.b);
        let ib = tape.sub(eye, b);
        let inv = tape.inverse(ib)?;
        let mixed = tape.matmul(inv, s);
        let ls = tape.param(store, self.log_noise_scale);
        let sd = tape.exp(ls);
        let err = tape.mul_col(eps, sd);
        Ok(tape.add(mixed, err))
    }
}

/// Fit `B` to the columns of `data` (`n × N`). The diagonal of `B` is reset
/// to zero after every step, followed by the L1 prox when `λ > 0`.
pub fn train_measurement_error(
    model: &MeasurementErrorModel,
    store: &mut ParamStore,
    data: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(data, model.n, "data")?;
    if data.ncols() < cfg.batch {
        return Err(Error::invalid(format!(
            "need at least batch={} observations, got {}",
            cfg.batch,
            data.ncols()
        )));
    }
    let mut bw = BatchSampler::new(data.ncols(), rng::stream(cfg.seed, streams::BANDWIDTH));
    let (kernel, degenerate) = cfg.kernel.fit(&gather_columns(data, &bw.next_batch(cfg.batch)))?;
    let mut batches = BatchSampler::new(data.ncols(), rng::stream(cfg.seed, streams::BATCH));
    let mut noise_rng = rng::stream(cfg.seed, streams::NOISE);
    let gen_batch = cfg.gen_batch();
    let b_id = model.b;
    let lambda = cfg.lambda;
    let loss_trace = optimize(
        store,
        cfg,
        |tape, store, _| {
            let real = gather_columns(data, &batches.next_batch(cfg.batch));
            let fake = model.generate(tape, store, gen_batch, &mut noise_rng)?;
            mmd::mmd2(tape, &real, fake, &kernel)
        },
        |store, lr| {
            let mut b = store.value(b_id).clone();
            b.fill_diagonal(0.0);
            if lambda > 0.0 {
                b = prox_l1(&b, lambda * lr)?;
            }
            store.set_value(b_id, b);
            Ok(())
        },
    )?;
    Ok(TrainReport {
        loss_trace,
        bandwidths: vec![kernel.bandwidths().to_vec()],
        degenerate_bandwidth: degenerate,
    })
}

/// VAR(1) observed every `k` steps.
#[derive(Debug, Clone)]
pub struct SubsampledModel {
    pub c: ParamId,
    /// Generator of the `n·k` stacked innovations.
    pub noise: SourceGenerator,
    k: usize,
    n: usize,
}

impl SubsampledModel {
    pub fn new(
        store: &mut ParamStore,
        n: usize,
        k: usize,
        kind: SourceKind,
        source_cfg: &SourceConfig,
        init: &TransitionInit,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::invalid("subsampled model needs n >= 1 and k >= 1"));
        }
        let c = store.add("C", init.build(n, &mut rng::stream(seed, streams::INIT))?);
        let noise = SourceGenerator::build(store, "noise", n * k, kind, source_cfg, seed)?;
        Ok(SubsampledModel { c, noise, k, n })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn transition(&self, store: &ParamStore) -> Matrix {
        store.value(self.c).clone()
    }

    /// `x̂_{t+1} = Cᵏ·x̃_t + L·ê`, one column of `ê` (`n·k` rows) per
    /// condition column.
    pub fn conditional_generate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cond: &Matrix,
        noise: Var,
    ) -> Result<Var> {
        let (n, k) = (self.n, self.k);
        let nv = tape.value(noise).shape();
        if cond.nrows() != n || nv != (n * k, cond.ncols()) {
            return Err(Error::ShapeMismatch {
                op: "conditional_generate",
                expected: (n * k, cond.ncols()),
                found: nv,
            });
        }
        let c = tape.param(store, self.c);
        let powers = tape_powers(tape, c, n, k);
        let x = tape.constant(cond.clone());
        let ar = tape.matmul(powers[k], x);
        let ma = block_apply(tape, &powers[..k], noise, n);
        Ok(tape.add(ar, ma))
    }
}

/// Repeat the columns of `m` cyclically until there are `count` of them.
fn cycle_columns(m: &Matrix, count: usize) -> Matrix {
    Matrix::from_fn(m.nrows(), count, |r, c| m[(r, c % m.ncols())])
}

/// Fit `C` to a subsampled series `data` (`n × T`) by matching the joint
/// law of consecutive pairs `(x̃_t, x̃_{t+1})`.
pub fn train_subsampled(
    model: &SubsampledModel,
    store: &mut ParamStore,
    data: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(data, model.n, "series")?;
    let t = data.ncols();
    if t < cfg.batch + 1 {
        return Err(Error::invalid(format!(
            "series length {t} is below batch + 1 = {}",
            cfg.batch + 1
        )));
    }
    let cond_all = data.columns(0, t - 1).into_owned();
    let next_all = data.columns(1, t - 1).into_owned();
    let mut bw = BatchSampler::new(t - 1, rng::stream(cfg.seed, streams::BANDWIDTH));
    let bw_idx = bw.next_batch(cfg.batch);
    let (k_cond, d1) = cfg.kernel.fit(&gather_columns(&cond_all, &bw_idx))?;
    let (k_next, d2) = cfg.kernel.fit(&gather_columns(&next_all, &bw_idx))?;
    let kernels = [k_cond, k_next];
    let mut batches = BatchSampler::new(t - 1, rng::stream(cfg.seed, streams::BATCH));
    let mut noise_rng = rng::stream(cfg.seed, streams::NOISE);
    let gen_batch = cfg.gen_batch();
    let loss_trace = optimize(
        store,
        cfg,
        |tape, store, _| {
            let idx = batches.next_batch(cfg.batch);
            let cond = gather_columns(&cond_all, &idx);
            let next = gather_columns(&next_all, &idx);
            let gen_cond = cycle_columns(&cond, gen_batch);
            let draws = model.noise.draw_noise(gen_batch, &mut noise_rng);
            let e = model.noise.sample(tape, store, &draws)?;
            let fake = model.conditional_generate(tape, store, &gen_cond, e)?;
            let cond_var = tape.constant(gen_cond);
            mmd::joint_mmd2(tape, &[cond, next], &[cond_var, fake], &kernels)
        },
        |_, _| Ok(()),
    )?;
    Ok(TrainReport {
        loss_trace,
        bandwidths: kernels.iter().map(|k| k.bandwidths().to_vec()).collect(),
        degenerate_bandwidth: d1 || d2,
    })
}

/// Non-overlapping pieces of length `l` starting at index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PiecePartition {
    pub piece_len: usize,
    pub pieces: usize,
    /// Tail observations that do not fill a piece.
    pub dropped: usize,
}

impl PiecePartition {
    pub fn new(t: usize, l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::invalid("piece length must be >= 2"));
        }
        if t < l {
            return Err(Error::invalid(format!("series length {t} is shorter than piece length {l}")));
        }
        Ok(PiecePartition {
            piece_len: l,
            pieces: t / l,
            dropped: t % l,
        })
    }

    /// Column indices of piece `i`.
    pub fn range(&self, i: usize) -> core::ops::Range<usize> {
        i * self.piece_len..(i + 1) * self.piece_len
    }
}

/// VAR(1) observed through block means of `k` states.
#[derive(Debug, Clone)]
pub struct AggregatedModel {
    pub c: ParamId,
    /// Generator of the `n·k` stacked scaled innovations `ε`.
    pub eps: SourceGenerator,
    k: usize,
    l: usize,
    n: usize,
}

impl AggregatedModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        n: usize,
        k: usize,
        l: usize,
        kind: SourceKind,
        source_cfg: &SourceConfig,
        init: &TransitionInit,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::invalid("aggregated model needs n >= 1 and k >= 1"));
        }
        if l < 2 {
            return Err(Error::invalid("piece length must be >= 2"));
        }
        let c = store.add("C", init.build(n, &mut rng::stream(seed, streams::INIT))?);
        let eps = SourceGenerator::build(store, "eps", n * k, kind, source_cfg, seed)?;
        Ok(AggregatedModel { c, eps, k, l, n })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn piece_len(&self) -> usize {
        self.l
    }

    pub fn transition(&self, store: &ParamStore) -> Matrix {
        store.value(self.c).clone()
    }

    /// Roll out `l − 1` targets from the real condition `cond`:
    /// `x̂_{t+1} = Cᵏ·x̃_t + M₀·ε̂_{t+1} + M₁·ε̂_t`, then the same recursion
    /// on generated states. `eps` holds the `l` noise blocks `ε̂_t … ε̂_{t+l−1}`.
    pub fn divided_generate_piece(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cond: &Matrix,
        eps: &[Var],
    ) -> Result<Vec<Var>> {
        let (n, k) = (self.n, self.k);
        if eps.len() != self.l {
            return Err(Error::invalid(format!(
                "expected {} noise blocks, got {}",
                self.l,
                eps.len()
            )));
        }
        if cond.nrows() != n {
            return Err(Error::ShapeMismatch {
                op: "divided_generate_piece",
                expected: (n, cond.ncols()),
                found: cond.shape(),
            });
        }
        for e in eps {
            if tape.value(*e).shape() != (n * k, cond.ncols()) {
                return Err(Error::ShapeMismatch {
                    op: "divided_generate_piece",
                    expected: (n * k, cond.ncols()),
                    found: tape.value(*e).shape(),
                });
            }
        }
        let c = tape.param(store, self.c);
        let powers = tape_powers(tape, c, n, k);
        let mut m0 = Vec::with_capacity(k);
        let mut acc = powers[0];
        m0.push(acc);
        for p in &powers[1..k] {
            acc = tape.add(acc, *p);
            m0.push(acc);
        }
        // M₁ blocks as suffix sums; the last block is zero and skipped
        let mut m1 = vec![None; k];
        let mut suffix: Option<Var> = None;
        for j in (0..k.saturating_sub(1)).rev() {
            let p = powers[j + 1];
            let s = match suffix {
                Some(s) => tape.add(s, p),
                None => p,
            };
            suffix = Some(s);
            m1[j] = Some(s);
        }
        let m1_blocks: Vec<(usize, Var)> = m1
            .iter()
            .enumerate()
            .filter_map(|(j, b)| b.map(|v| (j, v)))
            .collect();

        let mut prev = tape.constant(cond.clone());
        let mut out = Vec::with_capacity(self.l - 1);
        for j in 1..self.l {
            let ar = tape.matmul(powers[k], prev);
            let cur = block_apply(tape, &m0, eps[j], n);
            let mut x = tape.add(ar, cur);
            for &(b, w) in &m1_blocks {
                let block = tape.slice_rows(eps[j - 1], b * n, n);
                let term = tape.matmul(w, block);
                x = tape.add(x, term);
            }
            out.push(x);
            prev = x;
        }
        Ok(out)
    }
}

/// Fit `C` to an aggregated series `data` (`n × T`) by matching the joint
/// law of whole pieces. Returns the partition alongside the report.
pub fn train_aggregated(
    model: &AggregatedModel,
    store: &mut ParamStore,
    data: &Matrix,
    cfg: &TrainConfig,
) -> Result<(TrainReport, PiecePartition)> {
    cfg.validate()?;
    check_data(data, model.n, "series")?;
    let part = PiecePartition::new(data.ncols(), model.l)?;
    if part.pieces < 2 {
        return Err(Error::invalid(format!(
            "only {} piece(s) of length {}; at least 2 are needed to form a batch",
            part.pieces, model.l
        )));
    }
    if cfg.batch > part.pieces {
        return Err(Error::invalid(format!(
            "batch {} exceeds the number of pieces {}",
            cfg.batch, part.pieces
        )));
    }
    // slot s holds observation s of every piece
    let slots: Vec<Matrix> = (0..model.l)
        .map(|s| Matrix::from_fn(model.n, part.pieces, |r, i| data[(r, part.range(i).start + s)]))
        .collect();
    let mut kernels: Vec<KernelSpec> = Vec::with_capacity(model.l);
    let mut degenerate = false;
    for s in &slots {
        let (k, d) = cfg.kernel.fit(s)?;
        kernels.push(k);
        degenerate |= d;
    }
    let mut batches = BatchSampler::new(part.pieces, rng::stream(cfg.seed, streams::BATCH));
    let mut noise_rng = rng::stream(cfg.seed, streams::NOISE);
    let gen_batch = cfg.gen_batch();
    let loss_trace = optimize(
        store,
        cfg,
        |tape, store, _| {
            let idx = batches.next_batch(cfg.batch);
            let real: Vec<Matrix> = slots.iter().map(|s| gather_columns(s, &idx)).collect();
            let gen_cond = cycle_columns(&real[0], gen_batch);
            let mut eps = Vec::with_capacity(model.l);
            for _ in 0..model.l {
                let draws = model.eps.draw_noise(gen_batch, &mut noise_rng);
                eps.push(model.eps.sample(tape, store, &draws)?);
            }
            let rolled = model.divided_generate_piece(tape, store, &gen_cond, &eps)?;
            let mut gen = Vec::with_capacity(model.l);
            gen.push(tape.constant(gen_cond));
            gen.extend(rolled);
            mmd::joint_mmd2(tape, &real, &gen, &kernels)
        },
        |_, _| Ok(()),
    )?;
    Ok((
        TrainReport {
            loss_trace,
            bandwidths: kernels.iter().map(|k| k.bandwidths().to_vec()).collect(),
            degenerate_bandwidth: degenerate,
        },
        part,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, AdamConfig};
    use crate::linalg::from_rows;
    use crate::rng::stream;
    use crate::sources::MogConfig;
    use crate::synthdata;

    fn mog_cfg() -> SourceConfig {
        SourceConfig {
            kind: SourceKind::Mog,
            mog: MogConfig::default(),
            ..SourceConfig::default()
        }
    }

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn ica_start_finds_causal_order_without_measurement_error() {
        // chain 1 -> 0 -> 2 in shuffled variable order
        let b = from_rows(3, 3, &[0.0, 0.8, 0.0, 0.0, 0.0, 0.0, 0.7, 0.0, 0.0]);
        let mut r = stream(4, 0);
        let tilde = Matrix::from_fn(3, 20_000, |_, _| synthdata::SourceDist::Laplace { scale: 1.0 }.sample(&mut r));
        let x = synthdata::measurement_observations(&b, &tilde, &Matrix::zeros(3, 20_000)).unwrap();
        let est = ica_adjacency_start(&x, 1).unwrap();
        assert!((est - &b).amax() < 0.05);
    }

    #[test]
    fn moment_transition_recovers_long_subsampled_series() {
        let c = from_rows(2, 2, &[0.8, 0.3, 0.1, 0.6]);
        let noise = synthdata::var_noise_recipe(2);
        let high = synthdata::var_simulate(&c, &noise, 40_001, 200, 3).unwrap();
        let low = synthdata::subsample(&high.series, 2).unwrap();
        let est = moment_transition(&low, 2).unwrap();
        assert!((est - &c).abs().max() < 0.05);
    }

    #[test]
    fn moment_transition_degenerate_inputs() {
        assert!(moment_transition(&Matrix::zeros(2, 1), 2).is_none());
        assert!(moment_transition(&Matrix::zeros(2, 10), 2).is_none());
    }

    #[test]
    fn measurement_mixing_examples() {
        let eye = Matrix::identity(3, 3);
        let m = measurement_mixing(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(m.columns(0, 3), eye);
        assert_eq!(m.columns(3, 3), eye);
        let b = from_rows(2, 2, &[0.0, 0.0, 0.6, 0.0]);
        let m = measurement_mixing(&b).unwrap();
        assert!((m.columns(0, 2) - from_rows(2, 2, &[1.0, 0.0, 0.6, 1.0])).amax() < 1e-15);
        let b = from_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(measurement_mixing(&b), Err(Error::Singular { .. })));
    }

    #[test]
    fn measurement_left_block_inverts() {
        let mut r = stream(4, 0);
        for _ in 0..20 {
            let mut b = rng::uniform(4, 4, -0.4, 0.4, &mut r);
            b.fill_diagonal(0.0);
            let m = measurement_mixing(&b).unwrap();
            let prod = (Matrix::identity(4, 4) - &b) * m.columns(0, 4);
            assert!((prod - Matrix::identity(4, 4)).amax() < 1e-10);
        }
    }

    #[test]
    fn powers_and_l_examples() {
        let c = scalar(0.5);
        assert_eq!(matrix_power(&c, 0).unwrap(), scalar(1.0));
        assert_eq!(matrix_power(&c, 3).unwrap(), scalar(0.125));
        assert_eq!(build_l(&c, 1).unwrap(), scalar(1.0));
        assert_eq!(build_l(&c, 3).unwrap(), Matrix::from_row_slice(1, 3, &[1.0, 0.5, 0.25]));
        let c3 = rng::uniform(3, 3, -0.5, 0.5, &mut stream(1, 0));
        let l = build_l(&c3, 4).unwrap();
        assert_eq!(l.columns(0, 3), Matrix::identity(3, 3));
        for j in 0..4 {
            assert!((l.columns(j * 3, 3) - matrix_power(&c3, j as u32).unwrap()).amax() < 1e-15);
        }
        assert!(build_l(&c, 0).is_err());
    }

    #[test]
    fn m0_m1_examples() {
        let c = scalar(0.3);
        let (m0, m1) = build_m0_m1(&c, 1).unwrap();
        assert_eq!((m0, m1), (scalar(1.0), scalar(0.0)));
        let (m0, m1) = build_m0_m1(&c, 2).unwrap();
        assert!((m0 - Matrix::from_row_slice(1, 2, &[1.0, 1.3])).amax() < 1e-15);
        assert!((m1 - Matrix::from_row_slice(1, 2, &[0.3, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn m0_m1_block_sums_brute_force() {
        for n in 1..=3 {
            for k in 1..=5 {
                let c = rng::uniform(n, n, -0.6, 0.6, &mut stream(n as u64, k as u64));
                let (m0, m1) = build_m0_m1(&c, k).unwrap();
                let pow = |i: usize| matrix_power(&c, i as u32).unwrap();
                let total: Matrix = (0..k).map(pow).fold(Matrix::zeros(n, n), |a, b| a + b);
                for j in 0..k {
                    let want0: Matrix = (0..=j).map(pow).fold(Matrix::zeros(n, n), |a, b| a + b);
                    let want1: Matrix = (j + 1..k).map(pow).fold(Matrix::zeros(n, n), |a, b| a + b);
                    assert!((m0.columns(j * n, n) - want0).amax() < 1e-12);
                    assert!((m1.columns(j * n, n) - want1).amax() < 1e-12);
                    assert!((m0.columns(j * n, n) + m1.columns(j * n, n) - &total).amax() < 1e-12);
                }
            }
        }
    }

    fn subsampled(n: usize, k: usize, c: Matrix) -> (ParamStore, SubsampledModel) {
        let mut store = ParamStore::new();
        let model = SubsampledModel::new(&mut store, n, k, SourceKind::Mog, &mog_cfg(), &TransitionInit::Given(c), 0).unwrap();
        (store, model)
    }

    #[test]
    fn conditional_generate_examples() {
        let c = from_rows(2, 2, &[0.7, 0.2, 0.1, 0.6]);
        let (store, model) = subsampled(2, 1, c.clone());
        let cond = from_rows(2, 3, &[1.0, -1.0, 0.5, 2.0, 0.0, 1.0]);
        let mut tape = Tape::new();
        let zero = tape.constant(Matrix::zeros(2, 3));
        let out = model.conditional_generate(&mut tape, &store, &cond, zero).unwrap();
        assert!((tape.value(out) - &c * &cond).amax() < 1e-15);

        let (store, model) = subsampled(2, 3, Matrix::zeros(2, 2));
        let e = rng::standard_normal(6, 3, &mut stream(1, 1));
        let ev = tape.constant(e.clone());
        let out = model.conditional_generate(&mut tape, &store, &cond, ev).unwrap();
        assert_eq!(tape.value(out), &e.rows(0, 2).into_owned());

        let (store, model) = subsampled(1, 2, scalar(0.5));
        let ev = tape.constant(from_rows(2, 1, &[0.1, 0.3]));
        let out = model.conditional_generate(&mut tape, &store, &scalar(2.0), ev).unwrap();
        assert!((tape.scalar(out) - 0.75).abs() < 1e-15);
        let bad = tape.constant(Matrix::zeros(3, 1));
        assert!(model.conditional_generate(&mut tape, &store, &scalar(2.0), bad).is_err());
    }

    #[test]
    fn conditional_generate_gradient() {
        let (mut store, model) = subsampled(2, 3, from_rows(2, 2, &[0.6, 0.2, -0.1, 0.5]));
        let cond = rng::standard_normal(2, 5, &mut stream(2, 0));
        let e = rng::standard_normal(6, 5, &mut stream(2, 1));
        let err = grad_check(
            &mut store,
            |tape, store| {
                let ev = tape.constant(e.clone());
                let out = model.conditional_generate(tape, store, &cond, ev)?;
                Ok(tape.squared_norm(out))
            },
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    fn aggregated(n: usize, k: usize, l: usize, c: Matrix) -> (ParamStore, AggregatedModel) {
        let mut store = ParamStore::new();
        let model =
            AggregatedModel::new(&mut store, n, k, l, SourceKind::Mog, &mog_cfg(), &TransitionInit::Given(c), 0).unwrap();
        (store, model)
    }

    #[test]
    fn divided_rollout_hand_example() {
        let (store, model) = aggregated(1, 2, 2, scalar(0.5));
        let mut tape = Tape::new();
        let e0 = tape.constant(Matrix::zeros(2, 1));
        let e1 = tape.constant(from_rows(2, 1, &[0.2, 0.4]));
        let out = model.divided_generate_piece(&mut tape, &store, &scalar(1.0), &[e0, e1]).unwrap();
        assert_eq!(out.len(), 1);
        assert!((tape.scalar(out[0]) - 1.05).abs() < 1e-15);
    }

    #[test]
    fn divided_rollout_noise_free() {
        let c = from_rows(2, 2, &[0.6, 0.3, 0.1, 0.5]);
        let (store, model) = aggregated(2, 3, 4, c.clone());
        let cond = rng::standard_normal(2, 3, &mut stream(5, 0));
        let mut tape = Tape::new();
        let eps: Vec<Var> = (0..4).map(|_| tape.constant(Matrix::zeros(6, 3))).collect();
        let out = model.divided_generate_piece(&mut tape, &store, &cond, &eps).unwrap();
        let ck = matrix_power(&c, 3).unwrap();
        let mut want = cond.clone();
        for x in out {
            want = &ck * &want;
            assert!((tape.value(x) - &want).amax() < 1e-14);
        }
    }

    #[test]
    fn divided_rollout_k1_is_var() {
        let c = from_rows(2, 2, &[0.7, -0.2, 0.3, 0.4]);
        let (store, model) = aggregated(2, 1, 6, c.clone());
        let cond = rng::standard_normal(2, 4, &mut stream(6, 0));
        let noise: Vec<Matrix> = (0..6).map(|i| rng::standard_normal(2, 4, &mut stream(6, 1 + i))).collect();
        let mut tape = Tape::new();
        let eps: Vec<Var> = noise.iter().map(|m| tape.constant(m.clone())).collect();
        let out = model.divided_generate_piece(&mut tape, &store, &cond, &eps).unwrap();
        let mut x = cond.clone();
        for (j, v) in out.iter().enumerate() {
            x = &c * &x + &noise[j + 1];
            assert!((tape.value(*v) - &x).amax() < 1e-12);
        }
    }

    #[test]
    fn divided_rollout_gradient() {
        let (mut store, model) = aggregated(2, 2, 3, from_rows(2, 2, &[0.5, 0.1, 0.2, 0.4]));
        let cond = rng::standard_normal(2, 3, &mut stream(7, 0));
        let noise: Vec<Matrix> = (0..3).map(|i| rng::standard_normal(4, 3, &mut stream(7, 1 + i))).collect();
        let err = grad_check(
            &mut store,
            |tape, store| {
                let eps: Vec<Var> = noise.iter().map(|m| tape.constant(m.clone())).collect();
                let out = model.divided_generate_piece(tape, store, &cond, &eps)?;
                let a = tape.squared_norm(out[0]);
                let b = tape.sum(out[1]);
                Ok(tape.add(a, b))
            },
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn subsample_replay_matches_model() {
        for k in 1..=4 {
            let c = from_rows(2, 2, &[0.6, 0.3, 0.2, 0.7]);
            let v = synthdata::var_simulate(&c, &synthdata::var_noise_recipe(2), 40 * k, 20, 3).unwrap();
            let obs = synthdata::subsample(&v.series, k).unwrap();
            let ck = matrix_power(&c, k as u32).unwrap();
            let l = build_l(&c, k).unwrap();
            for t in 0..obs.ncols() - 1 {
                let stacked = Matrix::from_fn(2 * k, 1, |r, _| v.noise[(r % 2, (t + 1) * k - r / 2)]);
                let resid = obs.column(t + 1) - &ck * obs.column(t) - &l * stacked;
                assert!(resid.amax() < 1e-10);
            }
        }
    }

    #[test]
    fn aggregate_replay_matches_model() {
        for k in 1..=3 {
            let c = from_rows(2, 2, &[0.5, 0.2, 0.3, 0.6]);
            let v = synthdata::var_simulate(&c, &synthdata::var_noise_recipe(2), 30 * k, 20, 4).unwrap();
            let obs = synthdata::aggregate(&v.series, k).unwrap();
            let ck = matrix_power(&c, k as u32).unwrap();
            let (m0, m1) = build_m0_m1(&c, k).unwrap();
            let eps = |t: usize| {
                Matrix::from_fn(2 * k, 1, |r, _| v.noise[(r % 2, t * k + k - 1 - r / 2)] / k as f64)
            };
            for t in 1..obs.ncols() {
                let resid = obs.column(t) - &ck * obs.column(t - 1) - &m0 * eps(t) - &m1 * eps(t - 1);
                assert!(resid.amax() < 1e-10, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn partition_counts() {
        let p = PiecePartition::new(300, 5).unwrap();
        assert_eq!((p.pieces, p.dropped), (60, 0));
        let p = PiecePartition::new(13, 5).unwrap();
        assert_eq!((p.pieces, p.dropped), (2, 3));
        assert_eq!(p.range(1), 5..10);
        assert!(PiecePartition::new(4, 5).is_err());
    }

    #[test]
    fn single_piece_is_rejected() {
        let (mut store, model) = aggregated(1, 2, 5, scalar(0.5));
        let data = rng::standard_normal(1, 5, &mut stream(1, 0));
        let cfg = TrainConfig { batch: 2, iters: 1, ..TrainConfig::default() };
        let err = train_aggregated(&model, &mut store, &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(ref m) if m.contains("at least 2")), "{err}");
    }

    #[test]
    fn subsampled_batch_validation() {
        let (mut store, model) = subsampled(1, 2, scalar(0.5));
        let data = rng::standard_normal(1, 10, &mut stream(1, 0));
        let cfg = TrainConfig { batch: 10, iters: 1, ..TrainConfig::default() };
        assert!(train_subsampled(&model, &mut store, &data, &cfg).is_err());
    }

    fn short_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            batch: 16,
            iters: 20,
            adam: AdamConfig { lr: 0.01, ..AdamConfig::default() },
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn var_trainers_are_deterministic() {
        let data = synthdata::gen_var(&synthdata::VarRecipe::new(2, 60, 2, synthdata::Scheme::Subsample), 1)
            .unwrap()
            .observed;
        let run_sub = || {
            let mut store = ParamStore::new();
            let m = SubsampledModel::new(&mut store, 2, 2, SourceKind::Mog, &mog_cfg(), &TransitionInit::default(), 3).unwrap();
            let r = train_subsampled(&m, &mut store, &data, &short_cfg(3)).unwrap();
            (r.loss_trace, m.transition(&store))
        };
        assert_eq!(run_sub(), run_sub());
        let run_agg = || {
            let mut store = ParamStore::new();
            let m = AggregatedModel::new(&mut store, 2, 2, 4, SourceKind::Mog, &mog_cfg(), &TransitionInit::default(), 3).unwrap();
            let cfg = TrainConfig { batch: 10, ..short_cfg(3) };
            let (r, p) = train_aggregated(&m, &mut store, &data, &cfg).unwrap();
            assert_eq!(p.pieces, 15);
            (r.loss_trace, m.transition(&store))
        };
        assert_eq!(run_agg(), run_agg());
    }

    #[test]
    fn measurement_trainer_keeps_zero_diagonal() {
        let data = synthdata::gen_measurement_error(3, 200, &synthdata::MeasurementRecipe::default(), 2)
            .unwrap()
            .observations;
        let mut store = ParamStore::new();
        let m = MeasurementErrorModel::new(&mut store, 3, SourceKind::Mog, &mog_cfg(), 1).unwrap();
        let cfg = TrainConfig { lambda: 1e-3, ..short_cfg(1) };
        train_measurement_error(&m, &mut store, &data, &cfg).unwrap();
        let b = m.adjacency(&store);
        assert!((0..3).all(|i| b[(i, i)] == 0.0));
        assert!(b.amax() > 0.0);
    }

    #[test]
    fn measurement_generate_gradient() {
        let mut store = ParamStore::new();
        let m = MeasurementErrorModel::new(&mut store, 3, SourceKind::Mog, &mog_cfg(), 1).unwrap();
        let mut b = rng::uniform(3, 3, -0.3, 0.3, &mut stream(1, 2));
        b.fill_diagonal(0.0);
        store.set_value(m.b, b);
        let err = grad_check(
            &mut store,
            |tape, store| {
                let out = m.generate(tape, store, 6, &mut stream(9, 9))?;
                Ok(tape.squared_norm(out))
            },
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}
