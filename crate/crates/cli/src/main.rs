//! `chanex`: generate CSI datasets, train and evaluate extrapolators, run
//! the variant ablation and measure inference throughput.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use chanex_core::channelgen::DatasetId;
use chanex_core::dataio::{write_atomic, TaskDomain};
use chanex_core::extrapolator::Variant;
use chanex_core::{Error, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "chanex", version, about = "Multi-domain MIMO channel extrapolation experiments")]
struct Cli {
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the fully resolved default config.
    Init {
        #[arg(long, default_value = "chanex.json")]
        out: PathBuf,
    },
    /// Generate a dataset file.
    Gen {
        #[arg(long, default_value = "A")]
        dataset: DatasetId,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of samples (defaults to channel.n_samples).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train one variant on dataset A.
    Train {
        #[arg(long)]
        task: Option<TaskDomain>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Sets the split, shuffle and init seeds together.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and the repeat-last baseline.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "A")]
        dataset: DatasetId,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also measure throughput for the speed column.
        #[arg(long)]
        bench: bool,
    },
    /// Train and evaluate all four variants.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "T-D")]
        tasks: Vec<TaskDomain>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        no_bench: bool,
    },
    /// Measure single-threaded inference throughput of a checkpoint.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seconds of timed inference (at least 1).
        #[arg(long)]
        duration: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Init { out } => {
            write_atomic(&out, format!("{}\n", cfg.to_json()).as_bytes())?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Gen { dataset, out, n } => commands::cmd_gen(&cfg, dataset, out, n),
        Command::Train {
            task,
            variant,
            seed,
            data,
        } => {
            if let Some(t) = task {
                cfg = cfg.with_task(t)?;
            }
            if let Some(v) = variant {
                cfg = cfg.with_variant(v)?;
            }
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            commands::cmd_train(&cfg, data.as_deref())
        }
        Command::Eval {
            checkpoint,
            dataset,
            data,
            seed,
            bench,
        } => {
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            commands::cmd_eval(&cfg, &checkpoint, dataset, data.as_deref(), bench)
        }
        Command::Ablate { tasks, seeds, no_bench } => commands::cmd_ablate(&cfg, &tasks, &seeds, !no_bench),
        Command::Bench { checkpoint, duration } => commands::cmd_bench(&cfg, &checkpoint, duration),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        4
    } else if e.is_io() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
