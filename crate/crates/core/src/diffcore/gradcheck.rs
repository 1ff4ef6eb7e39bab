use super::param::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Coordinates checked per parameter by [`grad_check`].
const DEFAULT_COORDS_PER_PARAM: usize = 64;

/// Compares analytic gradients against central differences.
///
/// `forward` must be deterministic given the parameter values. Returns the
/// largest `|analytic − numeric| / max(1, |analytic|)` over the checked
/// coordinates (every coordinate of small parameters, an evenly strided
/// subset of large ones).
pub fn grad_check<F>(store: &mut ParamStore, forward: F, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    grad_check_with_limit(store, forward, epsilon, DEFAULT_COORDS_PER_PARAM)
}

pub fn grad_check_with_limit<F>(
    store: &mut ParamStore,
    forward: F,
    epsilon: f64,
    coords_per_param: usize,
) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    assert!(epsilon > 0.0, "grad_check: epsilon must be positive");
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = forward(&mut tape, store)?;
        Ok(tape.scalar(loss))
    };

    store.zero_grad();
    let mut tape = Tape::new();
    let loss = forward(&mut tape, store)?;
    tape.backward(loss, store)?;

    let ids: alloc::vec::Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst = 0.0f64;
    for id in ids {
        let n = store.get(id).value.len();
        let stride = n.div_ceil(coords_per_param.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let analytic = store.get(id).grad.as_slice()[k];
            let orig = store.get(id).value.as_slice()[k];
            store.get_mut(id).value.as_mut_slice()[k] = orig + epsilon;
            let up = eval(store)?;
            store.get_mut(id).value.as_mut_slice()[k] = orig - epsilon;
            let down = eval(store)?;
            store.get_mut(id).value.as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let err = libm::fabs(analytic - numeric) / libm::fabs(analytic).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
