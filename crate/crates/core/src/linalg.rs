//! Dense matrix helpers shared by the estimators.
//!
//! Samples are always stored column-wise: a `dim × batch` matrix holds one
//! observation per column.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Build a matrix from row-major data.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    assert_eq!(data.len(), rows * cols, "from_rows: data length");
    Matrix::from_row_slice(rows, cols, data)
}

/// Row-major copy of the entries.
pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `C^j` by repeated squaring; `C^0 = I`.
pub fn matrix_power(c: &Matrix, j: u32) -> Result<Matrix> {
    if !c.is_square() {
        return Err(Error::ShapeMismatch {
            op: "matrix_power",
            expected: (c.nrows(), c.nrows()),
            found: c.shape(),
        });
    }
    let n = c.nrows();
    let mut result = Matrix::identity(n, n);
    let mut base = c.clone();
    let mut e = j;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    Ok(result)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(c: &Matrix) -> Result<f64> {
    if !c.is_square() {
        return Err(Error::ShapeMismatch {
            op: "spectral_radius",
            expected: (c.nrows(), c.nrows()),
            found: c.shape(),
        });
    }
    if c.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = c.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0, f64::max))
}

/// Principal real `p`-th root by the coupled Newton iteration.
///
/// Converges when every eigenvalue has positive real part; returns `None`
/// when the iteration fails to reproduce `a` to relative accuracy 1e-8.
pub fn principal_root(a: &Matrix, p: u32) -> Option<Matrix> {
    if !a.is_square() || p == 0 || !all_finite(a) {
        return None;
    }
    if p == 1 {
        return Some(a.clone());
    }
    let n = a.nrows();
    let scale = a.norm();
    if !(scale > 0.0) {
        return Some(Matrix::zeros(n, n));
    }
    let eye = Matrix::identity(n, n);
    let pf = p as f64;
    let mut x = eye.clone();
    let mut m = a / scale;
    for _ in 0..100 {
        let step = (&eye * (pf - 1.0) + &m) / pf;
        x = &x * &step;
        let inv = step.try_inverse()?;
        m = matrix_power(&inv, p).ok()? * &m;
        if (&m - &eye).norm() < 1e-14 * libm::sqrt(n as f64) {
            break;
        }
    }
    let root = x * libm::pow(scale, 1.0 / pf);
    let back = matrix_power(&root, p).ok()?;
    ((&back - a).norm() <= 1e-8 * scale && all_finite(&root)).then_some(root)
}

fn norm_1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| libm::fabs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse together with its 1-norm condition number.
pub fn inverse_with_condition(m: &Matrix) -> Result<(Matrix, f64)> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            op: "inverse",
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    let inv = m.clone().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let cond = norm_1(m) * norm_1(&inv);
    if !cond.is_finite() {
        return Err(Error::Singular { condition: cond });
    }
    Ok((inv, cond))
}

/// Median of the pairwise squared distances between the columns of
/// `samples`. Returns `(median, degenerate)`; when every pair coincides the
/// median falls back to `1.0` and `degenerate` is set.
pub fn median_sq_distance(samples: &Matrix) -> Result<(f64, bool)> {
    let n = samples.ncols();
    if n < 2 {
        return Err(Error::invalid("median bandwidth needs at least two samples"));
    }
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(sq_dist(samples, i, samples, j));
        }
    }
    d2.sort_by(f64::total_cmp);
    let m = d2.len();
    let med = if m % 2 == 1 {
        d2[m / 2]
    } else {
        0.5 * (d2[m / 2 - 1] + d2[m / 2])
    };
    if med > 0.0 && med.is_finite() {
        Ok((med, false))
    } else if d2.iter().all(|&v| v == 0.0) {
        Ok((1.0, true))
    } else {
        // More than half the pairs coincide; fall back to the mean of the
        // nonzero distances so the kernel stays informative.
        let nz: Vec<f64> = d2.into_iter().filter(|v| *v > 0.0).collect();
        Ok((nz.iter().sum::<f64>() / nz.len() as f64, false))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    let ca = a.column(i);
    let cb = b.column(j);
    let mut s = 0.0;
    for r in 0..a.nrows() {
        let d = ca[r] - cb[r];
        s += d * d;
    }
    s
}
