//! qtwin: probe a simulated singlet-triplet qubit, train a surrogate model
//! of its measurement response, and optimize a {X_π/2, Y_π/2} gate set
//! through the surrogate.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "qtwin", version, about = "Data-driven qubit characterization and gate-set optimization")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override config fields, e.g. --set qubit.noise.enabled=false
    /// (repeatable; values parse as JSON).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a probe-pulse dataset by simulating random pulses.
    GenData {
        /// Qubit config: 'general', 'specific', or a JSON file path.
        #[arg(long)]
        config: String,
        /// Number of records.
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// Pulse length range 'min,max' (defaults to the strategy preset).
        #[arg(long)]
        lengths: Option<String>,
    },
    /// Train a surrogate network on a probe dataset.
    Train {
        /// Dataset JSONL produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Network preset: reduced, general, or specific.
        #[arg(long, default_value = "general")]
        network: String,
        /// Encoder capacity in segments.
        #[arg(long, default_value_t = 50)]
        l_max: usize,
        /// Training preset: desk, general, or specific.
        #[arg(long, default_value = "general")]
        train_preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize gate-set candidates through a trained surrogate and score
    /// them against the simulator.
    Optimize {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Qubit config: 'general', 'specific', or a JSON file path.
        #[arg(long)]
        config: String,
        /// Optimization schedule: 'desk', 'paper', or a JSON file path.
        #[arg(long, default_value = "desk")]
        opt_config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for reports and candidate pulses.
        #[arg(long)]
        out: PathBuf,
        /// How many candidates the selection step keeps.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Evaluate a checkpoint: test metrics and length-generalization report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Qubit config: 'general', 'specific', or a JSON file path.
        #[arg(long)]
        config: String,
        /// Comma-separated pulse lengths for the generalization report.
        #[arg(long, default_value = "10,20,30,40,50")]
        lengths: String,
        /// Fresh records per length (and for metrics when --data is absent).
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate metrics on this dataset instead of fresh records.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: failed to configure {workers} workers: {e}");
            return ExitCode::from(2);
        }
    }

    let sets = match config::parse_sets(&cli.sets) {
        Ok(sets) => sets,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::GenData {
            config,
            count,
            seed,
            out,
            lengths,
        } => commands::cmd_gen_data(commands::GenDataArgs {
            config,
            count,
            seed,
            out,
            lengths,
            sets,
        }),
        Command::Train {
            data,
            network,
            l_max,
            train_preset,
            seed,
            out,
        } => commands::cmd_train(commands::TrainArgs {
            data,
            network,
            l_max,
            train_preset,
            seed,
            out,
            sets,
        }),
        Command::Optimize {
            checkpoint,
            config,
            opt_config,
            seed,
            out,
            top,
        } => commands::cmd_optimize(commands::OptimizeArgs {
            checkpoint,
            config,
            opt_config,
            seed,
            out,
            top,
            sets,
        }),
        Command::Eval {
            checkpoint,
            config,
            lengths,
            count,
            seed,
            out,
            data,
        } => commands::cmd_eval(commands::EvalArgs {
            checkpoint,
            config,
            lengths,
            count,
            seed,
            out,
            data,
            sets,
        }),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 2 for configuration/domain problems, 3 for numeric failures.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<qtwin::Error>() {
            return match err {
                qtwin::Error::Numeric { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}
