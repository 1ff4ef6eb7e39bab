//! Gaussian-kernel Maximum Mean Discrepancy.
//!
//! The kernel is `k(x, y) = exp(−‖x − y‖² / (2σ²))`, summed over a set of
//! bandwidths `σ²`. [`mmd2`] compares two sample sets; [`joint_mmd2`]
//! compares sets of tuples under the product kernel
//! `Π_s k_s(a_s, b_s)`, which is the inner product of tensor-product feature
//! maps and therefore matches joint (or conditional, when the condition
//! slots coincide) distributions.
//!
//! Both estimators are differentiable with respect to the generated side:
//! gradients are accumulated in the same pass that evaluates the kernel sums.

use alloc::vec;
use alloc::vec::Vec;

use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{median_sq_distance, Matrix};

/// Default bandwidth multipliers applied to the median heuristic.
pub const DEFAULT_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// V-statistic; non-negative and defined for a single sample.
    #[default]
    Biased,
    /// U-statistic; drops the diagonal of the within-set sums.
    Unbiased,
}

/// Bandwidth set (`σ²` values, kernels summed) and estimator flavour.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
    pub estimator: Estimator,
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>, estimator: Estimator) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::invalid("kernel: bandwidth list is empty"));
        }
        if bandwidths.iter().any(|b| !b.is_finite() || *b <= 0.0) {
            return Err(Error::invalid("kernel: bandwidths must be finite and > 0"));
        }
        Ok(KernelSpec {
            bandwidths,
            estimator,
        })
    }

    pub fn single(sigma2: f64) -> Result<Self> {
        Self::new(vec![sigma2], Estimator::Biased)
    }

    /// Median heuristic on `samples` (columns), scaled by each multiplier.
    /// The second value reports whether the median fell back to 1.0 because
    /// every sample coincided.
    pub fn median_scaled(
        samples: &Matrix,
        multipliers: &[f64],
        estimator: Estimator,
    ) -> Result<(Self, bool)> {
        let (med, degenerate) = median_bandwidth(samples)?;
        let spec = Self::new(multipliers.iter().map(|m| m * med).collect(), estimator)?;
        Ok((spec, degenerate))
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    fn evaluator(&self) -> KernelEval {
        let mut inv: Vec<f64> = self.bandwidths.iter().map(|s| 1.0 / s).collect();
        // largest σ² first so that each following kernel is a power of it
        inv.sort_by(f64::total_cmp);
        let doubling = inv.len() > 1
            && inv
                .windows(2)
                .all(|w| libm::fabs(w[1] - 2.0 * w[0]) <= 1e-12 * w[1]);
        KernelEval { inv, doubling }
    }
}

/// Evaluates `Σ_b exp(−d²/(2σ_b²))` and `Σ_b exp(−d²/(2σ_b²)) / σ_b²`.
struct KernelEval {
    inv: Vec<f64>,
    /// Consecutive `1/σ²` values double, so each kernel is the square of
    /// the previous one.
    doubling: bool,
}

impl KernelEval {
    #[inline]
    fn eval(&self, d2: f64) -> (f64, f64) {
        let mut k = 0.0;
        let mut w = 0.0;
        if self.doubling {
            let mut e = libm::exp(-0.5 * d2 * self.inv[0]);
            for (b, inv) in self.inv.iter().enumerate() {
                if b > 0 {
                    e *= e;
                }
                k += e;
                w += e * inv;
            }
        } else {
            for inv in &self.inv {
                let e = libm::exp(-0.5 * d2 * inv);
                k += e;
                w += e * inv;
            }
        }
        (k, w)
    }
}

/// `exp(−‖x − y‖² / (2σ²))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma2: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("gaussian_kernel: dimension mismatch"));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("gaussian_kernel: sigma2 must be > 0"));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(libm::exp(-d2 / (2.0 * sigma2)))
}

/// Median pairwise squared distance between the columns of `samples`;
/// `(1.0, true)` when all samples coincide.
pub fn median_bandwidth(samples: &Matrix) -> Result<(f64, bool)> {
    median_sq_distance(samples)
}

/// Kernel and gradient-weight matrices for one slot.
struct SlotKernels {
    /// `k(y_i, y_j)`, `n × n`, row-major.
    kyy: Vec<f64>,
    wyy: Vec<f64>,
    /// `k(x_a, y_i)`, `m × n`, row-major.
    kxy: Vec<f64>,
    wxy: Vec<f64>,
    kxx: Vec<f64>,
}

#[inline]
fn col(s: &[f64], dim: usize, i: usize) -> &[f64] {
    &s[i * dim..(i + 1) * dim]
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn slot_kernels(x: &Matrix, y: &Matrix, kern: &KernelEval) -> SlotKernels {
    let (m, n, dim) = (x.ncols(), y.ncols(), y.nrows());
    let (xs, ys) = (x.as_slice(), y.as_slice());
    let (k0, w0) = kern.eval(0.0);
    let mut kyy = vec![0.0; n * n];
    let mut wyy = vec![0.0; n * n];
    for i in 0..n {
        kyy[i * n + i] = k0;
        wyy[i * n + i] = w0;
        let yi = col(ys, dim, i);
        for j in (i + 1)..n {
            let (k, w) = kern.eval(sq_dist(yi, col(ys, dim, j)));
            kyy[i * n + j] = k;
            kyy[j * n + i] = k;
            wyy[i * n + j] = w;
            wyy[j * n + i] = w;
        }
    }
    let mut kxy = vec![0.0; m * n];
    let mut wxy = vec![0.0; m * n];
    for a in 0..m {
        let xa = col(xs, dim, a);
        for i in 0..n {
            let (k, w) = kern.eval(sq_dist(xa, col(ys, dim, i)));
            kxy[a * n + i] = k;
            wxy[a * n + i] = w;
        }
    }
    let mut kxx = vec![0.0; m * m];
    for a in 0..m {
        kxx[a * m + a] = k0;
        let xa = col(xs, dim, a);
        for b in (a + 1)..m {
            let k = kern.eval(sq_dist(xa, col(xs, dim, b))).0;
            kxx[a * m + b] = k;
            kxx[b * m + a] = k;
        }
    }
    SlotKernels {
        kyy,
        wyy,
        kxy,
        wxy,
        kxx,
    }
}

/// Product over slots other than `skip`.
fn leave_one_out(mats: &[&Vec<f64>], skip: usize, idx: usize) -> f64 {
    let mut p = 1.0;
    for (s, m) in mats.iter().enumerate() {
        if s != skip {
            p *= m[idx];
        }
    }
    p
}

/// Value of the (joint) estimator and its gradient with respect to every
/// generated slot.
fn joint_value_and_grads(
    real: &[&Matrix],
    gen: &[&Matrix],
    kernels: &[KernelSpec],
    want_grads: bool,
) -> Result<(f64, Vec<Matrix>)> {
    let arity = real.len();
    if arity == 0 || gen.len() != arity || kernels.len() != arity {
        return Err(Error::invalid(
            "mmd: real, generated and kernel slot counts must match and be non-empty",
        ));
    }
    let (m, n) = (real[0].ncols(), gen[0].ncols());
    let estimator = kernels[0].estimator;
    if kernels.iter().any(|k| k.estimator != estimator) {
        return Err(Error::invalid("mmd: all slots must use one estimator"));
    }
    let min = match estimator {
        Estimator::Biased => 1,
        Estimator::Unbiased => 2,
    };
    if m < min || n < min {
        return Err(Error::invalid("mmd: sample set too small for the estimator"));
    }
    for s in 0..arity {
        if real[s].ncols() != m || gen[s].ncols() != n {
            return Err(Error::invalid("mmd: every slot needs the same sample count"));
        }
        if real[s].nrows() != gen[s].nrows() {
            return Err(Error::invalid("mmd: slot dimensions differ between sets"));
        }
    }

    let slots: Vec<SlotKernels> = (0..arity)
        .map(|s| slot_kernels(real[s], gen[s], &kernels[s].evaluator()))
        .collect();
    let prod = |get: fn(&SlotKernels) -> &Vec<f64>, len: usize| -> Vec<f64> {
        let mut p = vec![1.0; len];
        for sk in &slots {
            for (a, b) in p.iter_mut().zip(get(sk)) {
                *a *= b;
            }
        }
        p
    };
    let pxx = prod(|s| &s.kxx, m * m);
    let pyy = prod(|s| &s.kyy, n * n);
    let pxy = prod(|s| &s.kxy, m * n);

    let (sxx, syy) = match estimator {
        Estimator::Biased => (1.0 / (m * m) as f64, 1.0 / (n * n) as f64),
        Estimator::Unbiased => (
            1.0 / (m * (m - 1)) as f64,
            1.0 / (n * (n - 1)) as f64,
        ),
    };
    let sxy = 1.0 / (m * n) as f64;
    let off_diag_sum = |p: &[f64], len: usize, keep_diag: bool| -> f64 {
        let mut s = 0.0;
        for i in 0..len {
            for j in 0..len {
                if keep_diag || i != j {
                    s += p[i * len + j];
                }
            }
        }
        s
    };
    let keep = estimator == Estimator::Biased;
    let value = sxx * off_diag_sum(&pxx, m, keep) + syy * off_diag_sum(&pyy, n, keep)
        - 2.0 * sxy * pxy.iter().sum::<f64>();

    if !want_grads {
        return Ok((value, Vec::new()));
    }

    let kyy_all: Vec<&Vec<f64>> = slots.iter().map(|s| &s.kyy).collect();
    let kxy_all: Vec<&Vec<f64>> = slots.iter().map(|s| &s.kxy).collect();
    let mut grads = Vec::with_capacity(arity);
    for s in 0..arity {
        let (x, y) = (real[s], gen[s]);
        let dim = y.nrows();
        let sk = &slots[s];
        let (xs, ys) = (x.as_slice(), y.as_slice());
        let mut g = Matrix::zeros(dim, n);
        let gs = g.as_mut_slice();
        let mut cy = vec![0.0; n];
        let mut cx = vec![0.0; m];
        for i in 0..n {
            for (j, c) in cy.iter_mut().enumerate() {
                let idx = i * n + j;
                *c = if j == i {
                    0.0
                } else {
                    2.0 * syy * leave_one_out(&kyy_all, s, idx) * sk.wyy[idx]
                };
            }
            for (a, c) in cx.iter_mut().enumerate() {
                let idx = a * n + i;
                *c = -2.0 * sxy * leave_one_out(&kxy_all, s, idx) * sk.wxy[idx];
            }
            let yi = &ys[i * dim..(i + 1) * dim];
            let gi = &mut gs[i * dim..(i + 1) * dim];
            // Σ_j c_j (y_j − y_i) = Σ_j c_j y_j − (Σ_j c_j) y_i
            let total: f64 = cy.iter().sum::<f64>() + cx.iter().sum::<f64>();
            for (r, v) in gi.iter_mut().enumerate() {
                *v = -total * yi[r];
            }
            for (j, c) in cy.iter().enumerate() {
                for (v, yj) in gi.iter_mut().zip(&ys[j * dim..(j + 1) * dim]) {
                    *v += c * yj;
                }
            }
            for (a, c) in cx.iter().enumerate() {
                for (v, xa) in gi.iter_mut().zip(&xs[a * dim..(a + 1) * dim]) {
                    *v += c * xa;
                }
            }
        }
        grads.push(g);
    }
    Ok((value, grads))
}

/// MMD² between the columns of `x` and `y` (no gradient).
pub fn mmd2_value(x: &Matrix, y: &Matrix, kernel: &KernelSpec) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::invalid("mmd2: sample dimensions differ"));
    }
    Ok(joint_value_and_grads(&[x], &[y], core::slice::from_ref(kernel), false)?.0)
}

/// MMD² between fixed samples `x` and generated samples `y`; gradients flow
/// into `y`.
pub fn mmd2(tape: &mut Tape, x: &Matrix, y: Var, kernel: &KernelSpec) -> Result<Var> {
    let yv = tape.value(y).clone();
    if x.nrows() != yv.nrows() {
        return Err(Error::invalid("mmd2: sample dimensions differ"));
    }
    let (value, mut grads) =
        joint_value_and_grads(&[x], &[&yv], core::slice::from_ref(kernel), true)?;
    Ok(tape.scalar_fn(value, vec![(y, grads.remove(0))]))
}

/// Joint MMD² over tuples without gradients. Each slice element holds one
/// tuple slot (`dim_s × count`).
pub fn joint_mmd2_value(real: &[Matrix], gen: &[Matrix], kernels: &[KernelSpec]) -> Result<f64> {
    if real.len() != gen.len() {
        return Err(Error::invalid("joint_mmd2: tuple arity differs between sets"));
    }
    let r: Vec<&Matrix> = real.iter().collect();
    let g: Vec<&Matrix> = gen.iter().collect();
    Ok(joint_value_and_grads(&r, &g, kernels, false)?.0)
}

/// Joint MMD² under the product kernel; gradients flow into every generated
/// slot that requires them.
pub fn joint_mmd2(
    tape: &mut Tape,
    real: &[Matrix],
    gen: &[Var],
    kernels: &[KernelSpec],
) -> Result<Var> {
    if real.len() != gen.len() {
        return Err(Error::invalid("joint_mmd2: tuple arity differs between sets"));
    }
    let gen_vals: Vec<Matrix> = gen.iter().map(|v| tape.value(*v).clone()).collect();
    let r: Vec<&Matrix> = real.iter().collect();
    let g: Vec<&Matrix> = gen_vals.iter().collect();
    let (value, grads) = joint_value_and_grads(&r, &g, kernels, true)?;
    let inputs = gen.iter().copied().zip(grads).collect();
    Ok(tape.scalar_fn(value, inputs))
}
