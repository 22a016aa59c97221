//! `grasp-ebm`: generate grasp candidates and datasets, train and calibrate
//! energy models, predict shared grasps, and run the experiment studies.
//!
//! Exit codes: 0 success, 1 usage error, 2 missing or mismatched artifact,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "grasp-ebm", version, about = "Energy-based shared-grasp prediction for planar pick-and-place")]
pub struct Cli {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config's artifact directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Feasibility,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrationMode {
    #[value(name = "h_f")]
    HF,
    #[value(name = "h_s")]
    HS,
    #[value(name = "h_s_prime")]
    HSPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    MinEnergy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample antipodal grasp candidates for the configured object.
    GenGrasps {
        #[arg(long)]
        object: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Generate a labeled dataset and its train/test/val splits.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the feasibility model or the direct shared model.
    Train {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Calibrate a threshold on the matching validation split.
    Calibrate {
        #[arg(long, value_enum)]
        mode: CalibrationMode,
    },
    /// Predict shared grasps for one pose pair and print JSON.
    Predict {
        /// J, D, L, F, A or R.
        #[arg(long)]
        method: String,
        /// Initial pose as "x,y,theta".
        #[arg(long, allow_hyphen_values = true)]
        init: String,
        /// Goal pose as "x,y,theta" (ignored by F).
        #[arg(long, allow_hyphen_values = true)]
        goal: Option<String>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
    },
    /// Run an experiment study and write its report.
    Eval {
        /// data_efficiency, unseen_grasps, unseen_objects, baselines, or a
        /// name defined in the config.
        experiment: String,
        /// Replace learned models with the exact oracle (harness self-test).
        #[arg(long)]
        oracle_stub: bool,
    },
    /// Time analytical vs batched J prediction across candidate-set sizes.
    Bench {
        #[arg(long)]
        trials: Option<usize>,
        /// Time freshly initialized networks instead of trained ones;
        /// inference cost does not depend on the weights.
        #[arg(long)]
        untrained: bool,
    },
    /// Re-emit report tables from a run directory's raw logs.
    Report {
        /// Run directory; defaults to the newest run of `experiment`.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value = "data_efficiency")]
        experiment: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
