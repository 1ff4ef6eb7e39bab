//! Square symmetric FastICA with the log-cosh contrast.
//!
//! Used to warm-start the measurement-error estimator: the unmixing matrix
//! of a noisy linear non-Gaussian model approximates `I − B` up to row
//! permutation and scaling.

use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};
use crate::rng::{self, RunRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastIcaOptions {
    pub max_iter: usize,
    /// Stop when every row of `W` moves by less than this (in `1 − |cos|`).
    pub tol: f64,
}

impl Default for FastIcaOptions {
    fn default() -> Self {
        FastIcaOptions {
            max_iter: 500,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastIcaFit {
    /// `n × n` unmixing matrix acting on centered data.
    pub unmixing: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

/// `M^{-1/2}` of a symmetric positive definite matrix.
fn inv_sqrt_sym(m: Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(m);
    let floor = eig.eigenvalues.max() * 1e-12;
    if !(floor > 0.0) || eig.eigenvalues.iter().any(|&v| v <= floor) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let d = Matrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / libm::sqrt(v)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Fit `n` independent components to the columns of `x` (`n × N`).
pub fn fastica(x: &Matrix, opts: &FastIcaOptions, rng: &mut RunRng) -> Result<FastIcaFit> {
    let (n, count) = x.shape();
    if n == 0 || count < 2 {
        return Err(Error::invalid("fastica needs n >= 1 and at least two samples"));
    }
    if !all_finite(x) {
        return Err(Error::invalid("fastica: non-finite data"));
    }
    let mean = x.column_mean();
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        col -= &mean;
    }
    let cov = &xc * xc.transpose() / count as f64;
    let whiten = inv_sqrt_sym(cov)?;
    let z = &whiten * &xc;
    let mut w = decorrelate(rng::standard_normal(n, n, rng))?;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let y = &w * &z;
        let g = y.map(libm::tanh);
        let gp: Vec<f64> = (0..n)
            .map(|i| g.row(i).iter().map(|v| 1.0 - v * v).sum::<f64>() / count as f64)
            .collect();
        let mut next = &g * z.transpose() / count as f64;
        for i in 0..n {
            let wi = w.row(i).into_owned();
            let mut row = next.row_mut(i);
            row -= wi * gp[i];
        }
        let next = decorrelate(next)?;
        let shift = (0..n)
            .map(|i| 1.0 - libm::fabs(next.row(i).dot(&w.row(i))))
            .fold(0.0, f64::max);
        w = next;
        if shift < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(FastIcaFit {
        unmixing: w * whiten,
        iterations,
        converged,
    })
}

/// `(W Wᵀ)^{-1/2} W`.
fn decorrelate(w: Matrix) -> Result<Matrix> {
    let s = inv_sqrt_sym(&w * w.transpose())?;
    Ok(s * w)
}
