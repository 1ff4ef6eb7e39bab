//! Independent non-Gaussian source generators.
//!
//! Two families turn external noise into `d` independent sources, one row
//! per source and one column per sample:
//!
//! * [`MlpSourceGen`]: a separate small perceptron per source maps one
//!   standard-Gaussian scalar to one source value.
//! * [`MogSourceGen`]: a per-source mixture of Gaussians sampled with the
//!   Gumbel-softmax relaxation for the component choice and the
//!   reparameterization `μ + σ·ε` for the component draw, so that weights,
//!   means and scales all receive gradients.
//!
//! Noise is drawn separately from sampling ([`SourceGenerator::draw_noise`])
//! so a forward pass is a deterministic function of parameters and noise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::diffcore::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, streams};

/// Below this many observations the mixture-of-Gaussians family is used
/// when the source kind is [`SourceKind::Auto`].
pub const MOG_SAMPLE_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub slope: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![16, 16],
            slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MogConfig {
    pub components: usize,
    pub tau: f64,
    pub learn_weights: bool,
}

impl Default for MogConfig {
    fn default() -> Self {
        MogConfig {
            components: 2,
            tau: 0.5,
            learn_weights: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceKind {
    Mlp,
    Mog,
    /// Mixture of Gaussians for small datasets, perceptrons otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub mlp: MlpConfig,
    pub mog: MogConfig,
}

impl SourceConfig {
    pub fn resolve(&self, sample_count: usize) -> SourceKind {
        match self.kind {
            SourceKind::Auto if sample_count < MOG_SAMPLE_THRESHOLD => SourceKind::Mog,
            SourceKind::Auto => SourceKind::Mlp,
            k => k,
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

/// One perceptron `1 → hidden… → 1` per source; parameters are never
/// shared between sources.
#[derive(Debug, Clone)]
pub struct MlpSourceGen {
    nets: Vec<Vec<Layer>>,
    slope: f64,
}

impl MlpSourceGen {
    /// Fan-in scaled uniform weights, zero biases. Source `i` is initialized
    /// from its own stream of `seed`.
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, cfg: &MlpConfig, seed: u64) -> Self {
        let widths = Self::widths(cfg);
        let nets = (0..d)
            .map(|i| {
                let mut rng = rng::stream(seed, streams::SOURCE_BASE + i as u64);
                widths
                    .windows(2)
                    .enumerate()
                    .map(|(l, w)| {
                        let (fan_in, fan_out) = (w[0], w[1]);
                        let bound = 1.0 / libm::sqrt(fan_in as f64);
                        let weight = store.add(
                            format!("{prefix}.mlp{i}.w{l}"),
                            rng::uniform(fan_out, fan_in, -bound, bound, &mut rng),
                        );
                        let bias =
                            store.add(format!("{prefix}.mlp{i}.b{l}"), Matrix::zeros(fan_out, 1));
                        Layer { weight, bias }
                    })
                    .collect()
            })
            .collect();
        MlpSourceGen {
            nets,
            slope: cfg.slope,
        }
    }

    /// Networks that pass their input through unchanged (`f(z) = z`).
    /// Every hidden layer needs at least two units.
    pub fn identity(store: &mut ParamStore, prefix: &str, d: usize, cfg: &MlpConfig) -> Result<Self> {
        if cfg.hidden.iter().any(|&w| w < 2) {
            return Err(Error::invalid("identity MLP needs hidden widths >= 2"));
        }
        let gen = Self::new(store, prefix, d, cfg, 0);
        let c = 1.0 / (1.0 + cfg.slope);
        for net in &gen.nets {
            let last = net.len() - 1;
            for (l, layer) in net.iter().enumerate() {
                let (rows, cols) = store.value(layer.weight).shape();
                let mut w = Matrix::zeros(rows, cols);
                // hidden units carry (z, −z); leaky(z) − leaky(−z) = (1 + slope)·z
                if l == 0 {
                    w[(0, 0)] = 1.0;
                    w[(1, 0)] = -1.0;
                } else if l < last {
                    w[(0, 0)] = c;
                    w[(0, 1)] = -c;
                    w[(1, 0)] = -c;
                    w[(1, 1)] = c;
                } else {
                    w[(0, 0)] = c;
                    w[(0, 1)] = -c;
                }
                store.set_value(layer.weight, w);
                store.set_value(layer.bias, Matrix::zeros(rows, 1));
            }
        }
        Ok(gen)
    }

    fn widths(cfg: &MlpConfig) -> Vec<usize> {
        let mut w = vec![1];
        w.extend_from_slice(&cfg.hidden);
        w.push(1);
        w
    }

    pub fn dim(&self) -> usize {
        self.nets.len()
    }

    /// Parameters of source `i`.
    pub fn source_params(&self, i: usize) -> Vec<ParamId> {
        self.nets[i].iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// One standard-Gaussian scalar per source per sample.
    pub fn draw_noise(&self, batch: usize, rng: &mut impl Rng) -> Matrix {
        rng::standard_normal(self.dim(), batch, rng)
    }

    /// `d × batch` sources from a `d × batch` Gaussian noise block.
    pub fn sample(&self, tape: &mut Tape, store: &ParamStore, noise: &Matrix) -> Result<Var> {
        if noise.nrows() != self.dim() || noise.ncols() == 0 {
            return Err(Error::ShapeMismatch {
                op: "mlp_sample",
                expected: (self.dim(), noise.ncols().max(1)),
                found: noise.shape(),
            });
        }
        let mut rows = Vec::with_capacity(self.dim());
        for (i, net) in self.nets.iter().enumerate() {
            let mut h = tape.constant(noise.rows(i, 1).into_owned());
            for (l, layer) in net.iter().enumerate() {
                let w = tape.param(store, layer.weight);
                let b = tape.param(store, layer.bias);
                h = tape.matmul(w, h);
                h = tape.add_col(h, b);
                if l + 1 < net.len() {
                    h = tape.leaky_relu(h, self.slope);
                }
            }
            rows.push(h);
        }
        Ok(tape.vstack(&rows))
    }
}

/// Per-source mixture of Gaussians with relaxed component selection.
#[derive(Debug, Clone)]
pub struct MogSourceGen {
    /// `m × 1` unnormalized log-weights per source.
    logits: Vec<ParamId>,
    /// `1 × m` component means per source.
    means: Vec<ParamId>,
    /// `1 × m` component log standard deviations per source.
    log_scales: Vec<ParamId>,
    components: usize,
    tau: f64,
}

/// External noise for one mixture-of-Gaussians draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MogNoise {
    /// One `m × batch` block of Gumbel(0,1) draws per source.
    pub gumbel: Vec<Matrix>,
    /// `d × batch` standard-Gaussian draws.
    pub eps: Matrix,
}

impl MogSourceGen {
    /// Uniform weights, means near zero, component scales spread
    /// geometrically around one.
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize, cfg: &MogConfig, seed: u64) -> Result<Self> {
        if cfg.components == 0 {
            return Err(Error::invalid("mog: need at least one component"));
        }
        if !(cfg.tau > 0.0) {
            return Err(Error::invalid("mog: temperature must be > 0"));
        }
        let m = cfg.components;
        let mut logits = Vec::with_capacity(d);
        let mut means = Vec::with_capacity(d);
        let mut log_scales = Vec::with_capacity(d);
        for i in 0..d {
            let mut rng = rng::stream(seed, streams::SOURCE_BASE + i as u64);
            let id = store.add(format!("{prefix}.mog{i}.logits"), Matrix::zeros(m, 1));
            store.get_mut(id).trainable = cfg.learn_weights;
            logits.push(id);
            means.push(store.add(
                format!("{prefix}.mog{i}.means"),
                rng::uniform(1, m, -0.1, 0.1, &mut rng),
            ));
            let ls = Matrix::from_fn(1, m, |_, j| {
                let centred = j as f64 - (m as f64 - 1.0) / 2.0;
                centred * libm::log(3.0) + 0.1 * (rng.random::<f64>() - 0.5)
            });
            log_scales.push(store.add(format!("{prefix}.mog{i}.log_scales"), ls));
        }
        Ok(MogSourceGen {
            logits,
            means,
            log_scales,
            components: m,
            tau: cfg.tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.logits.len()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn source_params(&self, i: usize) -> Vec<ParamId> {
        vec![self.logits[i], self.means[i], self.log_scales[i]]
    }

    /// Overwrite source `i` with explicit weights, means and scales.
    pub fn set_source(
        &self,
        store: &mut ParamStore,
        i: usize,
        weights: &[f64],
        means: &[f64],
        scales: &[f64],
    ) -> Result<()> {
        let m = self.components;
        if weights.len() != m || means.len() != m || scales.len() != m {
            return Err(Error::invalid("mog: parameter length differs from component count"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("mog: weights and scales must be positive"));
        }
        store.set_value(self.logits[i], Matrix::from_fn(m, 1, |j, _| libm::log(weights[j])));
        store.set_value(self.means[i], Matrix::from_row_slice(1, m, means));
        store.set_value(
            self.log_scales[i],
            Matrix::from_fn(1, m, |_, j| libm::log(scales[j])),
        );
        Ok(())
    }

    /// Normalized mixture weights of source `i`.
    pub fn weights(&self, store: &ParamStore, i: usize) -> Vec<f64> {
        let logits = store.value(self.logits[i]);
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| libm::exp(l - mx)).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn draw_noise(&self, batch: usize, rng: &mut impl Rng) -> MogNoise {
        let gumbel = (0..self.dim())
            .map(|_| sample_gumbel(self.components, batch, rng))
            .collect();
        let eps = rng::standard_normal(self.dim(), batch, rng);
        MogNoise { gumbel, eps }
    }

    /// `ŝ_i = u·z̃_i + ε·(v·z̃_i)` with `z̃_i` the Gumbel-softmax relaxation
    /// of the component choice, `u` the means and `v` the scales.
    pub fn sample(&self, tape: &mut Tape, store: &ParamStore, noise: &MogNoise) -> Result<Var> {
        let batch = noise.eps.ncols();
        if noise.eps.nrows() != self.dim()
            || noise.gumbel.len() != self.dim()
            || noise
                .gumbel
                .iter()
                .any(|g| g.shape() != (self.components, batch))
        {
            return Err(Error::ShapeMismatch {
                op: "mog_sample",
                expected: (self.dim(), batch),
                found: noise.eps.shape(),
            });
        }
        let mut rows = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let logits = tape.param(store, self.logits[i]);
            let g = tape.constant(noise.gumbel[i].clone());
            let pre = tape.add_col(g, logits);
            let pre = tape.scale(pre, 1.0 / self.tau);
            let z = tape.softmax_cols(pre);
            let mu = tape.param(store, self.means[i]);
            let ls = tape.param(store, self.log_scales[i]);
            let sd = tape.exp(ls);
            let loc = tape.matmul(mu, z);
            let scale = tape.matmul(sd, z);
            let eps = tape.constant(noise.eps.rows(i, 1).into_owned());
            let spread = tape.mul(scale, eps);
            rows.push(tape.add(loc, spread));
        }
        Ok(tape.vstack(&rows))
    }
}

/// `g = −log(−log(u))`.
#[inline]
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -libm::log(-libm::log(u))
}

/// Gumbel(0,1) draws; uniforms are kept inside `[ε, 1 − ε]`.
pub fn sample_gumbel(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let lo = f64::EPSILON;
    let hi = 1.0 - f64::EPSILON;
    Matrix::from_fn(rows, cols, |_, _| {
        let u: f64 = rng.random::<f64>().clamp(lo, hi);
        gumbel_from_uniform(u)
    })
}

/// Relaxed one-hot sample `softmax((log w + g) / τ)`.
pub fn gumbel_softmax(weights: &[f64], g: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid("gumbel_softmax: tau must be > 0"));
    }
    if weights.len() != g.len() || weights.is_empty() {
        return Err(Error::invalid("gumbel_softmax: weights and draws differ in length"));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("gumbel_softmax: weights must be positive"));
    }
    let logits: Vec<f64> = weights
        .iter()
        .zip(g)
        .map(|(w, gj)| (libm::log(*w) + gj) / tau)
        .collect();
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| libm::exp(l - mx)).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

#[derive(Debug, Clone)]
pub enum SourceGenerator {
    Mlp(MlpSourceGen),
    Mog(MogSourceGen),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceNoise {
    Mlp(Matrix),
    Mog(MogNoise),
}

impl SourceGenerator {
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        kind: SourceKind,
        cfg: &SourceConfig,
        seed: u64,
    ) -> Result<Self> {
        match kind {
            SourceKind::Mlp => Ok(SourceGenerator::Mlp(MlpSourceGen::new(
                store, prefix, d, &cfg.mlp, seed,
            ))),
            SourceKind::Mog => Ok(SourceGenerator::Mog(MogSourceGen::new(
                store, prefix, d, &cfg.mog, seed,
            )?)),
            SourceKind::Auto => Err(Error::invalid("source kind must be resolved before building")),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SourceGenerator::Mlp(g) => g.dim(),
            SourceGenerator::Mog(g) => g.dim(),
        }
    }

    pub fn source_params(&self, i: usize) -> Vec<ParamId> {
        match self {
            SourceGenerator::Mlp(g) => g.source_params(i),
            SourceGenerator::Mog(g) => g.source_params(i),
        }
    }

    /// Exclude every generator parameter from optimization.
    pub fn freeze(&self, store: &mut ParamStore) {
        for i in 0..self.dim() {
            for id in self.source_params(i) {
                store.get_mut(id).trainable = false;
            }
        }
    }

    pub fn draw_noise(&self, batch: usize, rng: &mut impl Rng) -> SourceNoise {
        match self {
            SourceGenerator::Mlp(g) => SourceNoise::Mlp(g.draw_noise(batch, rng)),
            SourceGenerator::Mog(g) => SourceNoise::Mog(g.draw_noise(batch, rng)),
        }
    }

    pub fn sample(&self, tape: &mut Tape, store: &ParamStore, noise: &SourceNoise) -> Result<Var> {
        match (self, noise) {
            (SourceGenerator::Mlp(g), SourceNoise::Mlp(z)) => g.sample(tape, store, z),
            (SourceGenerator::Mog(g), SourceNoise::Mog(n)) => g.sample(tape, store, n),
            _ => Err(Error::invalid("noise block does not match the generator family")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check;
    use crate::rng::stream;

    #[test]
    fn identity_mlp_passes_noise_through() {
        let mut store = ParamStore::new();
        let gen = MlpSourceGen::identity(&mut store, "s", 3, &MlpConfig::default()).unwrap();
        let noise = rng::standard_normal(3, 50, &mut stream(7, 0));
        let mut tape = Tape::new();
        let out = gen.sample(&mut tape, &store, &noise).unwrap();
        assert!((tape.value(out) - &noise).amax() < 1e-12);
        assert!(MlpSourceGen::identity(&mut store, "t", 1, &MlpConfig { hidden: vec![1], slope: 0.2 }).is_err());
    }

    #[test]
    fn perturbing_one_source_leaves_others() {
        let mut store = ParamStore::new();
        let gen = MlpSourceGen::new(&mut store, "s", 2, &MlpConfig::default(), 3);
        let noise = rng::standard_normal(2, 20, &mut stream(1, 0));
        let run = |store: &ParamStore| {
            let mut tape = Tape::new();
            let v = gen.sample(&mut tape, store, &noise).unwrap();
            tape.value(v).clone()
        };
        let before = run(&store);
        for id in gen.source_params(0) {
            let p = store.get_mut(id);
            p.value.iter_mut().for_each(|v| *v += 0.37);
        }
        let after = run(&store);
        assert!((before.row(0) - after.row(0)).amax() > 1e-3);
        assert_eq!(before.row(1), after.row(1));
    }

    #[test]
    fn cross_source_jacobian_is_zero() {
        let mut store = ParamStore::new();
        let gen = MlpSourceGen::new(&mut store, "s", 3, &MlpConfig::default(), 11);
        let noise = rng::standard_normal(3, 8, &mut stream(2, 0));
        let mut tape = Tape::new();
        let out = gen.sample(&mut tape, &store, &noise).unwrap();
        let row1 = tape.slice_rows(out, 1, 1);
        let loss = tape.sum(row1);
        store.zero_grad();
        tape.backward(loss, &mut store).unwrap();
        for i in [0, 2] {
            for id in gen.source_params(i) {
                assert_eq!(store.get(id).grad.amax(), 0.0);
            }
        }
        assert!(gen.source_params(1).iter().any(|id| store.get(*id).grad.amax() > 0.0));
    }

    #[test]
    fn mlp_gradient_matches_fd() {
        let mut store = ParamStore::new();
        let gen = MlpSourceGen::new(&mut store, "s", 2, &MlpConfig::default(), 5);
        let noise = rng::standard_normal(2, 16, &mut stream(9, 0));
        let err = grad_check(
            &mut store,
            |tape, store| {
                let out = gen.sample(tape, store, &noise)?;
                let row = tape.slice_rows(out, 0, 1);
                let s = tape.sum(row);
                Ok(tape.scale(s, 1.0 / 16.0))
            },
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn gumbel_transform_fixed_points() {
        let e = core::f64::consts::E;
        assert!(gumbel_from_uniform(1.0 / e).abs() < 1e-15);
        assert!((gumbel_from_uniform((-e).exp()) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let g = sample_gumbel(1, 100_000, &mut stream(42, 0));
        let mean = g.sum() / 100_000.0;
        assert!((mean - 0.5772156649).abs() < 0.01, "{mean}");
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gumbel_softmax_examples() {
        let u = gumbel_softmax(&[0.25; 4], &[0.0; 4], 0.3).unwrap();
        assert!(u.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let e = core::f64::consts::E;
        let z = gumbel_softmax(&[0.5, 0.5], &[1.0, 0.0], 1.0).unwrap();
        assert!((z[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((z[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((z[0] - 0.731059).abs() < 1e-6);
        let w = [0.2, 0.5, 0.3];
        let g = [0.4, -0.1, 0.9];
        let hard = gumbel_softmax(&w, &g, 1e-3).unwrap();
        let best = (0..3)
            .max_by(|&a, &b| (w[a].ln() + g[a]).total_cmp(&(w[b].ln() + g[b])))
            .unwrap();
        assert!(hard[best] > 0.999);
        assert!(gumbel_softmax(&w, &g, 0.0).is_err());
        assert!(gumbel_softmax(&w, &g, -1.0).is_err());
    }

    #[test]
    fn single_standard_component_returns_eps() {
        let mut store = ParamStore::new();
        let cfg = MogConfig {
            components: 1,
            ..MogConfig::default()
        };
        let gen = MogSourceGen::new(&mut store, "m", 2, &cfg, 0).unwrap();
        for i in 0..2 {
            gen.set_source(&mut store, i, &[1.0], &[0.0], &[1.0]).unwrap();
        }
        let noise = gen.draw_noise(30, &mut stream(3, 0));
        let mut tape = Tape::new();
        let out = gen.sample(&mut tape, &store, &noise).unwrap();
        assert_eq!(tape.value(out), &noise.eps);
    }

    #[test]
    fn sharp_bimodal_mixture() {
        let mut store = ParamStore::new();
        let cfg = MogConfig {
            components: 2,
            tau: 0.01,
            learn_weights: true,
        };
        let gen = MogSourceGen::new(&mut store, "m", 1, &cfg, 0).unwrap();
        gen.set_source(&mut store, 0, &[0.5, 0.5], &[-5.0, 5.0], &[0.01, 0.01]).unwrap();
        let noise = gen.draw_noise(10_000, &mut stream(8, 0));
        let mut tape = Tape::new();
        let out = gen.sample(&mut tape, &store, &noise).unwrap();
        let v = tape.value(out);
        let mean = v.sum() / 10_000.0;
        assert!(mean.abs() < 0.2, "{mean}");
        let near = v.iter().filter(|x| (x.abs() - 5.0).abs() < 0.5).count();
        assert!(near as f64 / 10_000.0 > 0.95, "{near}");
    }

    #[test]
    fn mog_gradient_matches_fd() {
        let mut store = ParamStore::new();
        let gen = MogSourceGen::new(&mut store, "m", 2, &MogConfig::default(), 4).unwrap();
        gen.set_source(&mut store, 0, &[0.3, 0.7], &[-0.5, 1.0], &[0.4, 1.3]).unwrap();
        let noise = gen.draw_noise(12, &mut stream(5, 0));
        let err = grad_check(
            &mut store,
            |tape, store| {
                let out = gen.sample(tape, store, &noise)?;
                let sq = tape.mul(out, out);
                let s = tape.sum(sq);
                let lin = tape.sum(out);
                let both = tape.add(s, lin);
                Ok(tape.scale(both, 1.0 / 12.0))
            },
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn weights_stay_on_simplex() {
        let mut store = ParamStore::new();
        let gen = MogSourceGen::new(&mut store, "m", 1, &MogConfig { components: 3, ..MogConfig::default() }, 0).unwrap();
        gen.set_source(&mut store, 0, &[0.1, 0.6, 0.3], &[0.0; 3], &[1.0; 3]).unwrap();
        let w = gen.weights(&store, 0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn auto_kind_threshold() {
        let cfg = SourceConfig::default();
        assert_eq!(cfg.resolve(1999), SourceKind::Mog);
        assert_eq!(cfg.resolve(2000), SourceKind::Mlp);
        let fixed = SourceConfig { kind: SourceKind::Mlp, ..SourceConfig::default() };
        assert_eq!(fixed.resolve(10), SourceKind::Mlp);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_on_simplex_and_shift_invariant(
                logits in proptest::collection::vec(-3.0f64..3.0, 2..6),
                shift in -5.0f64..5.0,
                tau in 0.5f64..3.0,
            ) {
                let m = logits.len();
                let g: Vec<f64> = (0..m).map(|j| (j as f64 * 0.37).sin()).collect();
                let w: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
                let z = gumbel_softmax(&w, &g, tau).unwrap();
                prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(z.iter().all(|v| *v > 0.0 && *v < 1.0));
                let ws: Vec<f64> = logits.iter().map(|l| (l + shift).exp()).collect();
                let zs = gumbel_softmax(&ws, &g, tau).unwrap();
                for (a, b) in z.iter().zip(&zs) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
