//! `pc-engine` command line: argument parsing, config resolution, exit codes
//! and the five experiment commands.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_decay, cmd_gradtraj, cmd_relax, cmd_train, cmd_verify, Outcome};
pub use config::{
    apply_override, BatchSection, DataSection, DecaySection, ExperimentConfig, GradtrajSection,
    NetworkSection, Precision, ReferenceMode, RelaxSection, StepSection, SyntheticSection,
    SCHEMA_VERSION,
};

use crate::error::PcError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pc-engine", version, about = "State- and error-based predictive coding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Relax sPC and/or ePC on one batch, against the analytic optimum when linear.
    Relax,
    /// Layerwise energy traces plus binomial and Poisson decay tables.
    Decay,
    /// Randomized state/error equivalence suite.
    Verify,
    /// Train a network and report test accuracy.
    Train,
    /// Weight-gradient trajectories during relaxation.
    Gradtraj,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["f32", "f64"])]
    pub precision: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override any config field, e.g. `--set relax.spc.lr=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl CommonArgs {
    /// Flag overrides in application order; explicit flags win over `--set`.
    pub fn override_pairs(&self) -> Result<Vec<(String, String)>, PcError> {
        let mut out = Vec::new();
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| PcError::InvalidConfig(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            out.push((k.trim().to_string(), v.to_string()));
        }
        if let Some(seed) = self.seed {
            for k in ["seed", "train.seed", "verify.seed"] {
                out.push((k.to_string(), seed.to_string()));
            }
        }
        if let Some(p) = &self.precision {
            out.push(("precision".into(), format!("\"{p}\"")));
        }
        if let Some(o) = &self.out {
            let s = serde_json::to_string(&o.to_string_lossy()).expect("string serializes");
            out.push(("out".into(), s));
        }
        Ok(out)
    }
}

/// Exit code for a failed command.
pub fn exit_code(err: &PcError) -> i32 {
    match err {
        PcError::Singular { .. }
        | PcError::Domain(_)
        | PcError::Divergence { .. }
        | PcError::NonFinite { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Resolves the config and runs one command. Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match cli
        .common
        .override_pairs()
        .and_then(|o| ExperimentConfig::load(cli.common.config.as_deref(), &o))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = match cli.command {
        Command::Relax => cmd_relax(&cfg),
        Command::Decay => cmd_decay(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Gradtraj => cmd_gradtraj(&cfg),
    };
    match result {
        Ok(Outcome { summary, passed }) => {
            println!("{summary}");
            if passed {
                EXIT_OK
            } else {
                EXIT_VERIFICATION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
