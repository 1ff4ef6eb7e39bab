use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// L1 regularization weight and the step size it is paired with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxConfig {
    pub lambda: f64,
    pub gamma: f64,
}

impl ProxConfig {
    /// Shrinkage applied after a gradient step: `lambda · gamma`.
    pub fn threshold(&self) -> Result<f64> {
        let t = self.lambda * self.gamma;
        if self.lambda < 0.0 || self.gamma <= 0.0 || !t.is_finite() {
            return Err(Error::invalid("prox: lambda >= 0 and gamma > 0 required"));
        }
        Ok(t)
    }
}

#[inline]
pub fn soft_threshold(a: f64, t: f64) -> f64 {
    if a > t {
        a - t
    } else if a < -t {
        a + t
    } else {
        0.0
    }
}

/// Elementwise soft-thresholding, the proximal map of `t·‖·‖₁`.
pub fn prox_l1(a: &Matrix, t: f64) -> Result<Matrix> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid("prox_l1: threshold must be finite and >= 0"));
    }
    Ok(a.map(|v| soft_threshold(v, t)))
}
