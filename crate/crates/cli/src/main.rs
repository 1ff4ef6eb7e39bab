use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lfoica::config::{ExperimentConfig, Task};
use lfoica::csvio::{default_names, save_timeseries_csv, TimeSeries};
use lfoica::error::CliError;
use lfoica::results::save_results;
use lfoica::run::{run_experiment, synthesize};

#[derive(Parser)]
#[command(name = "lfoica", version, about = "Likelihood-free overcomplete ICA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover an overcomplete mixing matrix.
    Oica(RunArgs),
    /// Recover a causal adjacency matrix from data with measurement error.
    MeasurementError(RunArgs),
    /// Recover a VAR(1) transition matrix from a subsampled series.
    Subsampled(RunArgs),
    /// Recover a VAR(1) transition matrix from an aggregated series.
    Aggregated(RunArgs),
    /// Write the synthetic observations of a config as CSV.
    Datagen(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Results JSON, or the CSV file for `datagen`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    Ok(cfg)
}

fn run(task: Task, args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let task = cfg.resolve_task(Some(task))?;
    let result = run_experiment(&cfg, task, args.threads)?;
    save_results(&result, &args.out)?;
    let agg = &result.aggregate;
    match agg.median_mse {
        Some(m) => eprintln!(
            "{task}: {} completed, {} diverged, median mse {m:.4e}",
            agg.completed, agg.diverged
        ),
        None => eprintln!("{task}: {} completed, {} diverged", agg.completed, agg.diverged),
    }
    if agg.completed == 0 {
        return Err(CliError::AllDiverged(agg.diverged));
    }
    Ok(())
}

fn datagen(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let task = cfg.resolve_task(None)?;
    cfg.validate(task)?;
    let data = synthesize(&cfg, task, cfg.seed)?;
    let series = TimeSeries {
        names: default_names(data.observed.nrows()),
        data: data.observed,
    };
    save_timeseries_csv(Path::new(&args.out), &series)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Oica(a) => run(Task::Oica, a),
        Command::MeasurementError(a) => run(Task::MeasurementError, a),
        Command::Subsampled(a) => run(Task::Subsampled, a),
        Command::Aggregated(a) => run(Task::Aggregated, a),
        Command::Datagen(a) => datagen(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
