//! Likelihood-free overcomplete ICA.
//!
//! Mixing matrices are estimated by pushing Gaussian seed noise through
//! learnable per-source generators, mixing the result, and minimizing the
//! kernel Maximum Mean Discrepancy between generated and observed samples.
//! The same machinery drives three causal-discovery estimators: linear
//! non-Gaussian models observed with measurement error, subsampled VAR(1)
//! series, and temporally aggregated VAR(1) series.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! experiment runner and the command-line front end live in the `lfoica`
//! crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod causal;
pub mod diffcore;
pub mod error;
pub mod evalign;
pub mod ica;
pub mod linalg;
pub mod mmd;
pub mod oica;
pub mod rng;
pub mod sources;
pub mod synthdata;

pub use error::{Error, Result};
pub use linalg::Matrix;
