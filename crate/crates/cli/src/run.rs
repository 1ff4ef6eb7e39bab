//! Seeded experiment execution.
//!
//! Replication `r` uses seed `seed + r` for both its data and its training
//! streams, so adding replications never changes earlier ones. Replications
//! may run on several threads; results are merged by index.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use lfoica_core::causal::{
    ica_adjacency_start, train_aggregated, train_measurement_error, train_subsampled, AggregatedModel,
    MeasurementErrorModel,
    SubsampledModel,
};
use lfoica_core::diffcore::ParamStore;
use lfoica_core::evalign::{align, mse, normalize_first_column};
use lfoica_core::oica::{train_lfoica, MixingInit, OicaModel, TrainReport};
use lfoica_core::synthdata::{
    gen_measurement_error, gen_oica, gen_var, DagOptions, McMixSpec, MeasurementRecipe, Scheme, VarRecipe,
};
use lfoica_core::{Error as CoreError, Matrix};

use crate::config::{AdjacencyStart, ExperimentConfig, Recipe, Task};
use crate::csvio::{load_timeseries_csv, TimeSeries};
use crate::error::{CliError, DataError};
use crate::results::{Aggregate, MatrixRecord, Metric, Replication, RunResult, Timing};

/// Losses averaged into `final_loss`.
const FINAL_LOSS_WINDOW: usize = 100;

/// Observed data and, for synthetic recipes, the matrix to recover.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observed: Matrix,
    pub truth: Option<Matrix>,
    pub rescaled_from: Option<f64>,
}

/// Generate the synthetic dataset of one replication.
pub fn synthesize(cfg: &ExperimentConfig, task: Task, seed: u64) -> Result<Dataset, CoreError> {
    let d = &cfg.data;
    let need = |v: Option<usize>| v.expect("validated config");
    match task {
        Task::Oica => {
            let dim = need(d.d);
            let spec = match d.recipe {
                Recipe::Laplace => McMixSpec::laplace(dim),
                Recipe::Mog => McMixSpec::mog(dim),
            };
            let data = gen_oica(need(d.p), need(d.samples), &spec, seed)?;
            Ok(Dataset {
                observed: data.observations,
                truth: Some(data.mixing),
                rescaled_from: None,
            })
        }
        Task::MeasurementError => {
            let defaults = DagOptions::default();
            let recipe = MeasurementRecipe {
                dag: DagOptions {
                    edge_prob: d.edge_prob.unwrap_or(defaults.edge_prob),
                    ..defaults
                },
                ..MeasurementRecipe::default()
            };
            let data = gen_measurement_error(need(d.n), need(d.samples), &recipe, seed)?;
            Ok(Dataset {
                observed: data.observations,
                truth: Some(data.b),
                rescaled_from: None,
            })
        }
        Task::Subsampled | Task::Aggregated => {
            let scheme = if task == Task::Subsampled {
                Scheme::Subsample
            } else {
                Scheme::Aggregate
            };
            let mut recipe = VarRecipe::new(need(d.n), need(d.t), need(d.k), scheme);
            if let Some(b) = d.burn_in {
                recipe.burn_in = b;
            }
            let data = gen_var(&recipe, seed)?;
            Ok(Dataset {
                observed: data.observed,
                truth: Some(data.transition.c),
                rescaled_from: data.transition.rescaled_from,
            })
        }
    }
}

fn expected_rows(cfg: &ExperimentConfig, task: Task) -> usize {
    match task {
        Task::Oica => cfg.data.p,
        _ => cfg.data.n,
    }
    .expect("validated config")
}

/// Load the CSV named in the config and check it against the task.
pub fn load_observed(cfg: &ExperimentConfig, task: Task) -> Result<Option<TimeSeries>, CliError> {
    let Some(path) = &cfg.data.csv else {
        return Ok(None);
    };
    let ts = load_timeseries_csv(path)?;
    let rows = expected_rows(cfg, task);
    if ts.data.nrows() != rows {
        return Err(DataError::Shape(format!(
            "{}: {} columns, but the config describes {rows} variables",
            path.display(),
            ts.data.nrows()
        ))
        .into());
    }
    let cols = ts.data.ncols();
    let min = match task {
        Task::Oica | Task::MeasurementError => cfg.train.batch,
        Task::Subsampled => cfg.train.batch + 1,
        Task::Aggregated => cfg.train.batch * cfg.data.l.expect("validated config"),
    };
    if cols < min {
        return Err(DataError::Shape(format!(
            "{}: {cols} rows of data, need at least {min} for this batch size",
            path.display()
        ))
        .into());
    }
    Ok(Some(ts))
}

struct Fit {
    report: TrainReport,
    estimate: Matrix,
    dropped_tail: Option<usize>,
    init_fallback: bool,
}

fn fit(cfg: &ExperimentConfig, task: Task, data: &Dataset, seed: u64) -> Result<Fit, CoreError> {
    let d = &cfg.data;
    let need = |v: Option<usize>| v.expect("validated config");
    let train = cfg.train_config(task, seed);
    let sources = cfg.source_config();
    let kind = sources.resolve(data.observed.ncols());
    let mut store = ParamStore::new();
    match task {
        Task::Oica => {
            let (p, dim) = (need(d.p), need(d.d));
            let init = match (&data.truth, cfg.model.oracle_init) {
                (Some(truth), true) => MixingInit::Oracle {
                    truth: truth.clone(),
                    noise_sd: cfg.model.init_noise,
                },
                _ => MixingInit::Uniform {
                    half_width: cfg.model.init_half_width,
                },
            };
            let model = OicaModel::new(&mut store, p, dim, kind, &sources, &init, seed)?;
            let report = train_lfoica(&model, &mut store, &data.observed, &train)?;
            Ok(Fit {
                report,
                estimate: model.mixing_matrix(&store),
                dropped_tail: None,
                init_fallback: false,
            })
        }
        Task::MeasurementError => {
            let model = MeasurementErrorModel::new(&mut store, need(d.n), kind, &sources, seed)?;
            let mut init_fallback = false;
            if cfg.model.adjacency_init == AdjacencyStart::Ica {
                match ica_adjacency_start(&data.observed, seed) {
                    Some(b0) => store.set_value(model.b, b0),
                    None => init_fallback = true,
                }
            }
            let report = train_measurement_error(&model, &mut store, &data.observed, &train)?;
            Ok(Fit {
                report,
                estimate: model.adjacency(&store),
                dropped_tail: None,
                init_fallback,
            })
        }
        Task::Subsampled => {
            let (init, init_fallback) = cfg.transition_init(&data.observed, need(d.k));
            let model = SubsampledModel::new(&mut store, need(d.n), need(d.k), kind, &sources, &init, seed)?;
            let report = train_subsampled(&model, &mut store, &data.observed, &train)?;
            Ok(Fit {
                report,
                estimate: model.transition(&store),
                dropped_tail: None,
                init_fallback,
            })
        }
        Task::Aggregated => {
            let (init, init_fallback) = cfg.transition_init(&data.observed, need(d.k));
            let model =
                AggregatedModel::new(&mut store, need(d.n), need(d.k), need(d.l), kind, &sources, &init, seed)?;
            let (report, part) = train_aggregated(&model, &mut store, &data.observed, &train)?;
            Ok(Fit {
                report,
                estimate: model.transition(&store),
                dropped_tail: Some(part.dropped),
                init_fallback,
            })
        }
    }
}

/// Error of `est` against `truth`: aligned after unit-first-column
/// normalization for mixing matrices, entrywise otherwise.
pub fn score(task: Task, est: &Matrix, truth: &Matrix) -> Result<(Metric, f64, Option<Matrix>), CoreError> {
    match task {
        Task::Oica => {
            let truth = normalize_first_column(truth)?;
            let (al, aligned) = align(est, &truth)?;
            Ok((Metric::Aligned, al.residual_mse, Some(aligned)))
        }
        _ => Ok((Metric::Raw, mse(est, truth)?, None)),
    }
}

/// Run one replication. Training failures are recorded, not returned.
pub fn run_replication(
    cfg: &ExperimentConfig,
    task: Task,
    index: usize,
    observed: Option<&TimeSeries>,
) -> Result<(Replication, f64), CliError> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let data = match observed {
        Some(ts) => Dataset {
            observed: ts.data.clone(),
            truth: None,
            rescaled_from: None,
        },
        None => synthesize(cfg, task, seed)?,
    };
    let metric = if task == Task::Oica { Metric::Aligned } else { Metric::Raw };
    let mut rep = Replication {
        index,
        seed,
        metric,
        mse: None,
        diverged: false,
        error: None,
        final_loss: None,
        iterations: 0,
        estimate: None,
        truth: data.truth.as_ref().map(MatrixRecord::from_matrix),
        aligned_estimate: None,
        rescaled_from: data.rescaled_from,
        dropped_tail: None,
        init_fallback: false,
        degenerate_bandwidth: false,
    };
    let start = Instant::now();
    let outcome = fit(cfg, task, &data, seed);
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(f) => {
            let trace = &f.report.loss_trace;
            let w = trace.len().min(FINAL_LOSS_WINDOW);
            rep.iterations = trace.len();
            rep.final_loss = (w > 0).then(|| trace[trace.len() - w..].iter().sum::<f64>() / w as f64);
            rep.degenerate_bandwidth = f.report.degenerate_bandwidth;
            rep.dropped_tail = f.dropped_tail;
            rep.init_fallback = f.init_fallback;
            rep.estimate = Some(MatrixRecord::from_matrix(&f.estimate));
            if let Some(truth) = &data.truth {
                match score(task, &f.estimate, truth) {
                    Ok((m, v, aligned)) => {
                        rep.metric = m;
                        rep.mse = Some(v);
                        rep.aligned_estimate = aligned.as_ref().map(MatrixRecord::from_matrix);
                    }
                    Err(e) => {
                        rep.diverged = true;
                        rep.error = Some(e.to_string());
                    }
                }
            }
        }
        Err(e) => {
            rep.diverged = true;
            rep.error = Some(e.to_string());
        }
    }
    Ok((rep, seconds))
}

/// Run every replication of `cfg` on up to `threads` workers.
pub fn run_experiment(cfg: &ExperimentConfig, task: Task, threads: usize) -> Result<RunResult, CliError> {
    cfg.validate(task)?;
    let observed = load_observed(cfg, task)?;
    let count = cfg.replications;
    let workers = threads.clamp(1, count);
    let start = Instant::now();
    let slots: Mutex<Vec<Option<Result<(Replication, f64), CliError>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = run_replication(cfg, task, i, observed.as_ref());
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    let mut replications = Vec::with_capacity(count);
    let mut seconds = Vec::with_capacity(count);
    for slot in slots.into_inner().expect("worker panicked") {
        let (rep, s) = slot.expect("every replication ran")?;
        replications.push(rep);
        seconds.push(s);
    }
    Ok(RunResult {
        task,
        config: cfg.clone(),
        aggregate: Aggregate::from_replications(&replications),
        replications,
        timing: Timing {
            replication_seconds: seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(task: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "task = \"{task}\"\nseed = 3\nreplications = 2\ntrain.batch = 16\ntrain.iters = 5\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn oica_score_is_invariant_to_indeterminacies() {
        let truth = Matrix::from_row_slice(2, 3, &[0.3, -0.2, 0.1, 0.4, 0.25, -0.45]);
        let est = Matrix::from_row_slice(2, 3, &[0.1 * -3.0, 0.3 * 2.0, -0.2, -0.45 * -3.0, 0.4 * 2.0, 0.25]);
        let (metric, v, _) = score(Task::Oica, &est, &truth).unwrap();
        assert_eq!(metric, Metric::Aligned);
        assert!(v < 1e-24, "{v}");
    }

    #[test]
    fn raw_score_for_causal_tasks() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Matrix::zeros(2, 2);
        let (metric, v, aligned) = score(Task::MeasurementError, &a, &b).unwrap();
        assert_eq!((metric, v), (Metric::Raw, 0.25));
        assert!(aligned.is_none());
    }

    #[test]
    fn every_task_runs_and_merges_by_index() {
        let cases = [
            tiny("oica", "data.p = 2\ndata.d = 3\ndata.samples = 200"),
            tiny("measurement-error", "data.n = 3\ndata.samples = 200"),
            tiny("subsampled", "data.n = 2\ndata.k = 2\ndata.t = 60"),
            tiny("aggregated", "data.n = 2\ndata.k = 2\ndata.t = 101\ndata.l = 5"),
        ];
        for cfg in cases {
            let task = cfg.task.unwrap();
            let r = run_experiment(&cfg, task, 2).unwrap();
            assert_eq!(r.replications.len(), 2);
            for (i, rep) in r.replications.iter().enumerate() {
                assert_eq!(rep.index, i);
                assert_eq!(rep.seed, 3 + i as u64);
                assert_eq!(rep.iterations, 5);
                assert!(rep.mse.unwrap() >= 0.0, "{task}");
            }
            if task == Task::Aggregated {
                assert_eq!(r.replications[0].dropped_tail, Some(1));
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = tiny("subsampled", "data.n = 2\ndata.k = 2\ndata.t = 60");
        cfg.replications = 3;
        let a = run_experiment(&cfg, Task::Subsampled, 1).unwrap();
        let b = run_experiment(&cfg, Task::Subsampled, 3).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
    }

    #[test]
    fn replications_are_prefix_stable() {
        let two = tiny("measurement-error", "data.n = 2\ndata.samples = 100");
        let mut three = two.clone();
        three.replications = 3;
        let a = run_experiment(&two, Task::MeasurementError, 1).unwrap();
        let b = run_experiment(&three, Task::MeasurementError, 1).unwrap();
        assert_eq!(a.replications[..], b.replications[..2]);
    }
}
