//! Persisted experiment outcomes.
//!
//! Results are JSON. Matrices are stored row-major with their shape, and
//! non-finite entries become `null` with the replication marked diverged.
//! Wall-clock times live in a separate `timing` section so that two runs of
//! the same config differ only there.

use std::path::Path;

use serde::{Deserialize, Serialize};

use lfoica_core::Matrix;

use crate::config::{ExperimentConfig, Task};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries; `None` marks a non-finite value.
    pub data: Vec<Option<f64>>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                data.push(v.is_finite().then_some(v));
            }
        }
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    /// `None` if any entry is missing or the shape does not match the data.
    pub fn to_matrix(&self) -> Option<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return None;
        }
        let vals: Option<Vec<f64>> = self.data.iter().copied().collect();
        Some(Matrix::from_row_slice(self.rows, self.cols, &vals?))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(Option::is_some)
    }
}

/// How the estimate was compared with the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Both matrices scaled to a unit first column, then columns permuted
    /// and rescaled onto the truth.
    Aligned,
    /// Entrywise comparison without alignment.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Absent when the run diverged or no ground truth is available.
    pub mse: Option<f64>,
    pub diverged: bool,
    /// Error message for a diverged or failed replication.
    pub error: Option<String>,
    /// Mean loss over the last iterations (up to 100).
    pub final_loss: Option<f64>,
    pub iterations: usize,
    pub estimate: Option<MatrixRecord>,
    pub truth: Option<MatrixRecord>,
    /// Estimate after permutation and rescaling onto the normalized truth.
    pub aligned_estimate: Option<MatrixRecord>,
    /// Spectral radius of the sampled transition before it was rescaled.
    pub rescaled_from: Option<f64>,
    /// Trailing observations not covered by a whole piece.
    pub dropped_tail: Option<usize>,
    /// The data-driven start (moment transition or ICA adjacency) was
    /// unavailable and the plain default was used instead.
    pub init_fallback: bool,
    pub degenerate_bandwidth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub completed: usize,
    pub diverged: usize,
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
}

impl Aggregate {
    pub fn from_replications(reps: &[Replication]) -> Self {
        let mut mses: Vec<f64> = reps.iter().filter(|r| !r.diverged).filter_map(|r| r.mse).collect();
        let diverged = reps.iter().filter(|r| r.diverged).count();
        mses.sort_by(f64::total_cmp);
        let mean = (!mses.is_empty()).then(|| mses.iter().sum::<f64>() / mses.len() as f64);
        Aggregate {
            completed: reps.len() - diverged,
            diverged,
            mean_mse: mean,
            median_mse: median_sorted(&mses),
        }
    }
}

pub fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Training wall time per replication, in replication order.
    pub replication_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: Task,
    pub config: ExperimentConfig,
    pub replications: Vec<Replication>,
    pub aggregate: Aggregate,
    pub timing: Timing,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The document with the timing section zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timing = Timing {
            replication_seconds: vec![0.0; r.timing.replication_seconds.len()],
            total_seconds: 0.0,
        };
        r
    }
}

pub fn save_results(result: &RunResult, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, result.to_json() + "\n").map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_results(path: &Path) -> Result<RunResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        source: e,
    })?;
    RunResult::from_json(&text).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(index: usize, mse: Option<f64>, diverged: bool) -> Replication {
        Replication {
            index,
            seed: index as u64,
            metric: Metric::Raw,
            mse,
            diverged,
            error: None,
            final_loss: mse,
            iterations: 10,
            estimate: Some(MatrixRecord::from_matrix(&Matrix::from_row_slice(
                2,
                2,
                &[0.1, f64::NAN, 1.0 / 3.0, -2.5e-300],
            ))),
            truth: None,
            aligned_estimate: None,
            rescaled_from: Some(1.2),
            dropped_tail: None,
            init_fallback: false,
            degenerate_bandwidth: false,
        }
    }

    #[test]
    fn matrix_record_is_row_major_with_shape() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = MatrixRecord::from_matrix(&m);
        assert_eq!((r.rows, r.cols), (2, 3));
        assert_eq!(r.data, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].map(Some));
        assert_eq!(r.to_matrix().unwrap(), m);
    }

    #[test]
    fn nan_becomes_null() {
        let r = rep(0, None, true);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("null"));
        assert!(!json.contains("NaN"));
        assert!(r.estimate.as_ref().unwrap().to_matrix().is_none());
    }

    #[test]
    fn aggregate_skips_diverged() {
        let reps = [rep(0, Some(3.0), false), rep(1, None, true), rep(2, Some(1.0), false), rep(3, Some(2.0), false)];
        let agg = Aggregate::from_replications(&reps);
        assert_eq!(agg.completed, 3);
        assert_eq!(agg.diverged, 1);
        assert_eq!(agg.median_mse, Some(2.0));
        assert_eq!(agg.mean_mse, Some(2.0));
        assert_eq!(median_sorted(&[1.0, 2.0]), Some(1.5));
        assert_eq!(median_sorted(&[]), None);
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = ExperimentConfig::from_toml("task = \"oica\"\ndata.p = 2\ndata.d = 3\ndata.samples = 100").unwrap();
        let reps = vec![rep(0, Some(0.1 + 0.2), false), rep(1, None, true)];
        let result = RunResult {
            task: Task::Oica,
            config: cfg,
            aggregate: Aggregate::from_replications(&reps),
            replications: reps,
            timing: Timing {
                replication_seconds: vec![1.0 / 7.0, 2.0],
                total_seconds: 3.0,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        save_results(&result, &path).unwrap();
        assert_eq!(load_results(&path).unwrap(), result);
    }
}
