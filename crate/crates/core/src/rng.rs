//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream derived from the
//! run seed and a fixed stream id, so adding a component never shifts the
//! draws seen by another.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;

pub type RunRng = ChaCha8Rng;

pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const BANDWIDTH: u64 = 5;
    /// Per-source initialization streams start here.
    pub const SOURCE_BASE: u64 = 1 << 16;
}

pub fn stream(seed: u64, id: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| lo + (hi - lo) * rng.random::<f64>())
}

/// Uniformly random permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut impl Rng) -> alloc::vec::Vec<usize> {
    let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
