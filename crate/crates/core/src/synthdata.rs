//! Synthetic data recipes: overcomplete mixtures, linear causal models with
//! measurement error, and VAR(1) series observed through subsampling or
//! temporal aggregation.
//!
//! Every generator takes an explicit seed. In mixture descriptors the second
//! parameter of a Gaussian component is its variance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, streams};

pub const DEFAULT_BURN_IN: usize = 500;

/// Distribution of one independent source.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceDist {
    /// Zero-mean Laplace with density `exp(−|x|/b) / 2b`.
    Laplace { scale: f64 },
    Mog {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
}

impl SourceDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            SourceDist::Laplace { scale } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::invalid(format!("laplace scale must be > 0, got {scale}")));
                }
            }
            SourceDist::Mog {
                weights,
                means,
                variances,
            } => {
                let m = weights.len();
                if m == 0 || means.len() != m || variances.len() != m {
                    return Err(Error::invalid("mixture components have inconsistent lengths"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(Error::invalid("mixture weights must be non-negative with positive sum"));
                }
                if variances.iter().any(|v| !(*v >= 0.0)) || means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid("mixture variances must be non-negative"));
                }
                if self.variance() == 0.0 {
                    return Err(Error::invalid("degenerate mixture with zero variance"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            SourceDist::Laplace { .. } => 0.0,
            SourceDist::Mog { weights, means, .. } => {
                let total: f64 = weights.iter().sum();
                weights.iter().zip(means).map(|(w, m)| w * m).sum::<f64>() / total
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            SourceDist::Laplace { scale } => 2.0 * scale * scale,
            SourceDist::Mog {
                weights,
                means,
                variances,
            } => {
                let total: f64 = weights.iter().sum();
                let mu = self.mean();
                weights
                    .iter()
                    .zip(means.iter().zip(variances))
                    .map(|(w, (m, v))| w * (v + (m - mu) * (m - mu)))
                    .sum::<f64>()
                    / total
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            SourceDist::Laplace { scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() { scale * e } else { -scale * e }
            }
            SourceDist::Mog {
                weights,
                means,
                variances,
            } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut j = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        j = i;
                        break;
                    }
                    u -= w;
                }
                let z: f64 = StandardNormal.sample(rng);
                means[j] + libm::sqrt(variances[j]) * z
            }
        }
    }

    /// Two zero-mean components with the given variances; `first` is the
    /// weight of the first component.
    pub fn two_component(first: f64, var0: f64, var1: f64) -> Self {
        SourceDist::Mog {
            weights: vec![first, 1.0 - first],
            means: vec![0.0, 0.0],
            variances: vec![var0, var1],
        }
    }
}

/// Evenly spread values in `[lo, hi]`, used to make per-source
/// distributions distinct.
fn spread(count: usize, index: usize, lo: f64, hi: f64) -> f64 {
    if count <= 1 {
        (lo + hi) / 2.0
    } else {
        lo + (hi - lo) * index as f64 / (count - 1) as f64
    }
}

/// Per-source distributions for an overcomplete mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct McMixSpec {
    pub sources: Vec<SourceDist>,
}

impl McMixSpec {
    /// Laplace sources with distinct scales spread over `[0.5, 1.5]`.
    pub fn laplace(d: usize) -> Self {
        McMixSpec {
            sources: (0..d)
                .map(|i| SourceDist::Laplace {
                    scale: spread(d, i, 0.5, 1.5),
                })
                .collect(),
        }
    }

    /// Two-component N(0,1) + N(0,4) sources with distinct proportions.
    pub fn mog(d: usize) -> Self {
        McMixSpec {
            sources: (0..d)
                .map(|i| SourceDist::two_component(spread(d, i, 0.5, 0.9), 1.0, 4.0))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::invalid("mixture spec has no sources"));
        }
        self.sources.iter().try_for_each(SourceDist::validate)
    }

    pub fn dim(&self) -> usize {
        self.sources.len()
    }

    /// `d × count` independent draws, row `i` from source `i`.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Matrix {
        let mut out = Matrix::zeros(self.dim(), count);
        for c in 0..count {
            for (i, dist) in self.sources.iter().enumerate() {
                out[(i, c)] = dist.sample(rng);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OicaData {
    pub mixing: Matrix,
    pub sources: Matrix,
    pub observations: Matrix,
}

/// `X = A·S` with `A` entries uniform on `(−0.5, 0.5)`.
pub fn gen_oica(p: usize, n: usize, spec: &McMixSpec, seed: u64) -> Result<OicaData> {
    let d = spec.dim();
    if p == 0 || d < p {
        return Err(Error::invalid(format!("need 1 <= p <= d, got p={p}, d={d}")));
    }
    let mut rng = rng::stream(seed, streams::DATA);
    let mixing = rng::uniform(p, d, -0.5, 0.5, &mut rng);
    gen_oica_with_mixing(mixing, n, spec, seed)
}

pub fn gen_oica_with_mixing(mixing: Matrix, n: usize, spec: &McMixSpec, seed: u64) -> Result<OicaData> {
    spec.validate()?;
    if mixing.ncols() != spec.dim() {
        return Err(Error::ShapeMismatch {
            op: "gen_oica",
            expected: (mixing.nrows(), spec.dim()),
            found: mixing.shape(),
        });
    }
    let mut rng = rng::stream(seed, streams::NOISE);
    let sources = spec.sample(n, &mut rng);
    let observations = &mixing * &sources;
    Ok(OicaData {
        mixing,
        sources,
        observations,
    })
}

/// Structure of the random causal DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct DagOptions {
    pub edge_prob: f64,
    pub weight_lo: f64,
    pub weight_hi: f64,
}

impl Default for DagOptions {
    fn default() -> Self {
        DagOptions {
            edge_prob: 0.3,
            weight_lo: 0.5,
            weight_hi: 1.0,
        }
    }
}

/// Linear non-Gaussian causal model observed with additive Gaussian error.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecipe {
    pub dag: DagOptions,
    /// Distribution of each error term of the error-free model.
    pub tilde: SourceDist,
    /// Variance of the Gaussian measurement error.
    pub noise_var: f64,
}

impl Default for MeasurementRecipe {
    fn default() -> Self {
        MeasurementRecipe {
            dag: DagOptions::default(),
            tilde: SourceDist::two_component(0.8, 0.01, 1.0),
            noise_var: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementData {
    /// Adjacency matrix, `b[(i, j)]` is the weight of edge `j → i`.
    pub b: Matrix,
    /// Causal order used to build `b`, first entry is a root.
    pub order: Vec<usize>,
    pub tilde_e: Matrix,
    pub noise: Matrix,
    pub observations: Matrix,
}

/// Random DAG adjacency with edges following a random causal order.
pub fn sample_dag(n: usize, opts: &DagOptions, rng: &mut impl Rng) -> Result<(Matrix, Vec<usize>)> {
    if !(0.0..=1.0).contains(&opts.edge_prob) || !(opts.weight_lo <= opts.weight_hi) {
        return Err(Error::invalid("dag options out of range"));
    }
    let order = rng::permutation(n, rng);
    let mut b = Matrix::zeros(n, n);
    for child in 1..n {
        for parent in 0..child {
            if rng.random::<f64>() < opts.edge_prob {
                let w = opts.weight_lo + (opts.weight_hi - opts.weight_lo) * rng.random::<f64>();
                b[(order[child], order[parent])] = w;
            }
        }
    }
    Ok((b, order))
}

/// `X = (I − B)⁻¹·Ẽ + E`.
pub fn measurement_observations(b: &Matrix, tilde_e: &Matrix, noise: &Matrix) -> Result<Matrix> {
    let n = b.nrows();
    if tilde_e.nrows() != n || noise.shape() != tilde_e.shape() {
        return Err(Error::ShapeMismatch {
            op: "measurement_observations",
            expected: (n, tilde_e.ncols()),
            found: noise.shape(),
        });
    }
    let (inv, _) = linalg::inverse_with_condition(&(Matrix::identity(n, n) - b))?;
    Ok(inv * tilde_e + noise)
}

pub fn gen_measurement_error(
    n: usize,
    count: usize,
    recipe: &MeasurementRecipe,
    seed: u64,
) -> Result<MeasurementData> {
    if n < 2 {
        return Err(Error::invalid("measurement-error data needs n >= 2"));
    }
    recipe.tilde.validate()?;
    if !(recipe.noise_var >= 0.0) {
        return Err(Error::invalid("measurement noise variance must be >= 0"));
    }
    let (b, order) = sample_dag(n, &recipe.dag, &mut rng::stream(seed, streams::DATA))?;
    let mut rng = rng::stream(seed, streams::NOISE);
    let tilde_e = Matrix::from_fn(n, count, |_, _| recipe.tilde.sample(&mut rng));
    let noise = rng::standard_normal(n, count, &mut rng) * libm::sqrt(recipe.noise_var);
    let observations = measurement_observations(&b, &tilde_e, &noise)?;
    Ok(MeasurementData {
        b,
        order,
        tilde_e,
        noise,
        observations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRanges {
    pub diag: (f64, f64),
    pub off_diag: (f64, f64),
}

impl Default for TransitionRanges {
    fn default() -> Self {
        TransitionRanges {
            diag: (0.5, 1.0),
            off_diag: (0.0, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub c: Matrix,
    /// Spectral radius before rescaling, when a rescale happened.
    pub rescaled_from: Option<f64>,
}

pub const STABLE_RADIUS: f64 = 0.95;

/// Rescale to spectral radius 0.95 when `ρ(C) ≥ 1`.
pub fn stabilize(c: Matrix) -> Result<Transition> {
    let rho = linalg::spectral_radius(&c)?;
    if rho >= 1.0 {
        Ok(Transition {
            c: c * (STABLE_RADIUS / rho),
            rescaled_from: Some(rho),
        })
    } else {
        Ok(Transition {
            c,
            rescaled_from: None,
        })
    }
}

pub fn sample_transition(n: usize, ranges: &TransitionRanges, seed: u64) -> Result<Transition> {
    if n == 0 {
        return Err(Error::invalid("transition matrix needs n >= 1"));
    }
    let mut rng = rng::stream(seed, streams::DATA);
    let c = Matrix::from_fn(n, n, |i, j| {
        let (lo, hi) = if i == j { ranges.diag } else { ranges.off_diag };
        lo + (hi - lo) * rng.random::<f64>()
    });
    stabilize(c)
}

/// Per-variable N(0, 0.1) + N(0, 4) noise with distinct first-component
/// proportions spread over `[0.5, 0.9]`.
pub fn var_noise_recipe(n: usize) -> Vec<SourceDist> {
    (0..n)
        .map(|v| SourceDist::two_component(spread(n, v, 0.5, 0.9), 0.1, 4.0))
        .collect()
}

/// High-resolution VAR(1) series with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSeries {
    /// `n × T` states after burn-in.
    pub series: Matrix,
    /// `n × T` innovations, column `t` drove `series` column `t`.
    pub noise: Matrix,
    /// State preceding the first retained column.
    pub initial: Matrix,
}

/// `x_t = C·x_{t−1} + e_t` from `x = 0`, discarding `burn_in` steps.
pub fn var_simulate(
    c: &Matrix,
    noise_spec: &[SourceDist],
    t_high: usize,
    burn_in: usize,
    seed: u64,
) -> Result<VarSeries> {
    let n = c.nrows();
    if c.ncols() != n || noise_spec.len() != n {
        return Err(Error::invalid("transition matrix and noise spec disagree on n"));
    }
    noise_spec.iter().try_for_each(SourceDist::validate)?;
    let rho = linalg::spectral_radius(c)?;
    if rho >= 1.0 {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let mut rng = rng::stream(seed, streams::NOISE);
    let mut draw = || Matrix::from_fn(n, 1, |i, _| noise_spec[i].sample(&mut rng));
    let mut x = Matrix::zeros(n, 1);
    for _ in 0..burn_in {
        x = c * &x + draw();
    }
    let initial = x.clone();
    let mut series = Matrix::zeros(n, t_high);
    let mut noise = Matrix::zeros(n, t_high);
    for t in 0..t_high {
        let e = draw();
        x = c * &x + &e;
        series.set_column(t, &x.column(0));
        noise.set_column(t, &e.column(0));
    }
    Ok(VarSeries {
        series,
        noise,
        initial,
    })
}

/// Keep columns `0, k, 2k, …`.
pub fn subsample(series: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::invalid("subsampling factor must be >= 1"));
    }
    let t = series.ncols();
    let len = if t == 0 { 0 } else { (t - 1) / k + 1 };
    Ok(Matrix::from_fn(series.nrows(), len, |i, j| series[(i, j * k)]))
}

/// Means of consecutive non-overlapping windows of `k` columns; the tail
/// shorter than `k` is dropped.
pub fn aggregate(series: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::invalid("aggregation factor must be >= 1"));
    }
    let len = series.ncols() / k;
    Ok(Matrix::from_fn(series.nrows(), len, |i, j| {
        (0..k).map(|r| series[(i, j * k + r)]).sum::<f64>() / k as f64
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Subsample,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarRecipe {
    pub n: usize,
    pub ranges: TransitionRanges,
    /// Number of low-resolution observations.
    pub t_low: usize,
    pub k: usize,
    pub scheme: Scheme,
    pub burn_in: usize,
}

impl VarRecipe {
    pub fn new(n: usize, t_low: usize, k: usize, scheme: Scheme) -> Self {
        VarRecipe {
            n,
            ranges: TransitionRanges::default(),
            t_low,
            k,
            scheme,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// High-resolution length needed for `t_low` observations.
    pub fn t_high(&self) -> usize {
        match self.scheme {
            Scheme::Subsample => (self.t_low.saturating_sub(1)) * self.k + 1,
            Scheme::Aggregate => self.t_low * self.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarData {
    pub transition: Transition,
    pub high: VarSeries,
    pub observed: Matrix,
}

pub fn gen_var(recipe: &VarRecipe, seed: u64) -> Result<VarData> {
    if recipe.k == 0 || recipe.t_low == 0 {
        return Err(Error::invalid("var recipe needs k >= 1 and T >= 1"));
    }
    let transition = sample_transition(recipe.n, &recipe.ranges, seed)?;
    let high = var_simulate(
        &transition.c,
        &var_noise_recipe(recipe.n),
        recipe.t_high(),
        recipe.burn_in,
        seed,
    )?;
    let observed = match recipe.scheme {
        Scheme::Subsample => subsample(&high.series, recipe.k)?,
        Scheme::Aggregate => aggregate(&high.series, recipe.k)?,
    };
    Ok(VarData {
        transition,
        high,
        observed,
    })
}
