use alloc::vec::Vec;

use super::param::{Param, ParamStore};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};

/// Optimizer hyper-parameters shared by every parameter of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("adam: lr > 0, beta1/beta2 in (0,1), eps > 0"))
        }
    }
}

/// First/second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), cfg: AdamConfig) -> Self {
        AdamState {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
            t: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }
}

/// One bias-corrected adaptive-moment update of `param` from its current
/// gradient.
pub fn adam_step(param: &mut Param, state: &mut AdamState) -> Result<()> {
    if state.m.shape() != param.value.shape() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            expected: param.value.shape(),
            found: state.m.shape(),
        });
    }
    if !all_finite(&param.grad) {
        return Err(Error::Divergence {
            param: param.name.clone(),
            iteration: None,
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    let (b1, b2) = (state.beta1, state.beta2);
    for ((w, g), (m, v)) in param
        .value
        .iter_mut()
        .zip(param.grad.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= state.lr * m_hat / (libm::sqrt(v_hat) + state.eps);
    }
    Ok(())
}

/// Adam over every trainable parameter of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        let states = store
            .iter()
            .map(|(_, p)| AdamState::new(p.value.shape(), cfg))
            .collect();
        Ok(Adam { cfg, states })
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// Changes the step size of every parameter (used by schedules).
    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
        self.states.iter_mut().for_each(|s| s.lr = lr);
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for (p, s) in store.params_mut().iter_mut().zip(self.states.iter_mut()) {
            if p.trainable {
                adam_step(p, s)?;
            }
        }
        Ok(())
    }
}
