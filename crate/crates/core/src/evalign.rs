//! Alignment of estimated mixing matrices against ground truth.
//!
//! Columns of an estimated mixing matrix are only identified up to
//! permutation, scale and sign. [`align`] picks the column permutation and
//! per-column scale minimizing the squared residual to the truth; the
//! permutation is a minimum-cost assignment solved by the Hungarian method.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `permutation[j]` is the estimated column matched to truth column `j`.
    pub permutation: Vec<usize>,
    /// Scale applied to the matched estimated column (sign included).
    pub scales: Vec<f64>,
    /// Mean squared elementwise residual after alignment.
    pub residual_mse: f64,
}

/// How per-column scales are chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScaleRule {
    /// `s = ⟨est, truth⟩ / ⟨est, est⟩`.
    #[default]
    LeastSquares,
    /// `|s| = sqrt(var_est / var_truth)` from the variances of the
    /// recovered and true sources; sign taken from `⟨est, truth⟩`.
    VarianceRatio {
        est_var: Vec<f64>,
        truth_var: Vec<f64>,
    },
}

/// Divide the whole matrix by the L2 norm of its first column.
pub fn normalize_first_column(a: &Matrix) -> Result<Matrix> {
    if a.ncols() == 0 {
        return Err(Error::DegenerateMatrix("matrix has no columns".into()));
    }
    let norm = a.column(0).norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateMatrix(alloc::format!(
            "first column norm is {norm}"
        )));
    }
    Ok(a / norm)
}

/// Elementwise mean squared error.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse",
            expected: a.shape(),
            found: b.shape(),
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("mse of empty matrices"));
    }
    Ok((a - b).norm_squared() / a.len() as f64)
}

/// Least-squares alignment; returns the alignment and `est·Π·diag(s)`.
pub fn align(est: &Matrix, truth: &Matrix) -> Result<(Alignment, Matrix)> {
    align_with(est, truth, &ScaleRule::LeastSquares)
}

pub fn align_with(est: &Matrix, truth: &Matrix, rule: &ScaleRule) -> Result<(Alignment, Matrix)> {
    if est.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "align",
            expected: truth.shape(),
            found: est.shape(),
        });
    }
    let d = truth.ncols();
    if let ScaleRule::VarianceRatio { est_var, truth_var } = rule {
        if est_var.len() != d || truth_var.len() != d {
            return Err(Error::invalid("variance-ratio scaling needs one variance per column"));
        }
        if est_var.iter().chain(truth_var).any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("variances must be positive"));
        }
    }
    // scale[e][t] and cost[t][e]
    let mut scale = vec![vec![0.0; d]; d];
    let mut cost = vec![vec![0.0; d]; d];
    for e in 0..d {
        let ec = est.column(e);
        let ee = ec.dot(&ec);
        for t in 0..d {
            let tc = truth.column(t);
            let et = ec.dot(&tc);
            let s = match rule {
                ScaleRule::LeastSquares if ee > 0.0 => et / ee,
                ScaleRule::LeastSquares => 0.0,
                ScaleRule::VarianceRatio { est_var, truth_var } => {
                    let mag = libm::sqrt(est_var[e] / truth_var[t]);
                    if et < 0.0 { -mag } else { mag }
                }
            };
            scale[e][t] = s;
            cost[t][e] = (ec * s - tc).norm_squared();
        }
    }
    let permutation = assign(&cost);
    let scales: Vec<f64> = (0..d).map(|t| scale[permutation[t]][t]).collect();
    let aligned = Matrix::from_fn(truth.nrows(), d, |i, t| est[(i, permutation[t])] * scales[t]);
    let residual_mse = if truth.is_empty() {
        0.0
    } else {
        (&aligned - truth).norm_squared() / truth.len() as f64
    };
    Ok((
        Alignment {
            permutation,
            scales,
            residual_mse,
        },
        aligned,
    ))
}

/// Minimum-cost perfect assignment on a square cost matrix; `result[row]`
/// is the column assigned to `row`. Shortest augmenting paths with
/// potentials, `O(n³)`.
pub fn assign(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays, index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost[r - 1][c - 1] - u[r] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    next = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = next;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for c in 1..=n {
        result[owner[c] - 1] = c - 1;
    }
    result
}
