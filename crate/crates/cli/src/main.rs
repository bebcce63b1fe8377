use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use replaycl_cli::{cmd_ablation, cmd_generate, cmd_infer, cmd_run, CliError, SweepKnob};

/// Continual-learning experiments on tabular data with replay.
#[derive(Parser)]
#[command(name = "replaycl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mission benchmark from a spec file.
    Generate {
        /// Benchmark spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Directory for the mission CSVs and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (strategy, seed) pair of an experiment config.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel runs (default 1; results are identical at any level).
        #[arg(long)]
        jobs: Option<usize>,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Sweep one hyperparameter and emit a tidy CSV of report groups.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        /// Knob to sweep: percentile | synthetic_fraction.
        #[arg(long)]
        sweep: String,
        /// Comma-separated sweep values, e.g. 90,80,70.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Per-row multi-head predictions for a feature CSV.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input CSV; label/entity/mission columns are ignored if present.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV of per-head predictions.
        #[arg(long)]
        output: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { spec, out } => cmd_generate(&spec, &out),
        Command::Run { config, out, jobs, seed_override } => {
            let summary = cmd_run(&config, out.as_deref(), jobs, seed_override)?;
            if summary.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::runtime(format!(
                    "{} run(s) failed; partial reports flagged in reports.json",
                    summary.failures.len()
                )))
            }
        }
        Command::Ablation { config, sweep, values, out, jobs } => {
            let knob = SweepKnob::parse(&sweep)?;
            let values: Vec<f64> = values
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::usage(format!("non-numeric sweep value '{s}'")))
                })
                .collect::<Result<_, _>>()?;
            cmd_ablation(&config, knob, &values, out.as_deref(), jobs).map(|_| ())
        }
        Command::Infer { checkpoint, input, output } => cmd_infer(&checkpoint, &input, &output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("REPLAYCL_LOG", "info"))
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
