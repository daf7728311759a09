//! Command-line front end: configuration, subcommands, artifacts and exit
//! codes.
//!
//! Exit codes: 0 success, 10 configuration, 11 data (unreadable or malformed
//! inputs), 12 training or numerical failure, 13 incompatible checkpoint,
//! 1 anything else.

mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hevtl::transfer::Mode;
use hevtl::{Error, Profile};

pub use commands::{run, source_count_trend};
pub use config::{resolve_output_dir, RunConfig, OUTPUT_DIR_ENV};
pub use output::{Artifacts, Manifest, MANIFEST_FILE};

pub const EXIT_CONFIG: i32 = 10;
pub const EXIT_DATA: i32 = 11;
pub const EXIT_TRAINING: i32 = 12;
pub const EXIT_INCOMPATIBLE: i32 = 13;

#[derive(Debug, Parser)]
#[command(
    name = "hevtl",
    version,
    about = "Hybrid-vehicle energy management with PPO and policy transfer"
)]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides HEVTL_OUTPUT_DIR and the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the partition's source cycles and save a checkpoint.
    Train,
    /// Deterministic rollout of a checkpoint on one cycle.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cycle file or id of a configured cycle.
        #[arg(long)]
        cycle: String,
        #[arg(long)]
        soc0: Option<f64>,
    },
    /// Train students on the target cycles, cold or from an expert.
    Transfer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run one of the transfer ablations.
    Ablate {
        #[command(subcommand)]
        which: Ablation,
    },
    /// Dynamic-programming reference solutions.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Check or generate driving cycles.
    Cycles {
        #[command(subcommand)]
        which: CyclesCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum Ablation {
    SourceCount,
    TargetInclusion,
    /// Cold versus warm learning curves on the targets.
    Tl {
        /// Expert checkpoint; trained on the source set when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    Solve {
        #[arg(long)]
        cycle: String,
        #[arg(long)]
        soc0: Option<f64>,
        /// SOC by torque node counts, e.g. `401x24`; overrides the config.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
        /// Policy to compare against the DP cost.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// J* over the configured SOC-node ladder.
    Refine {
        #[arg(long)]
        cycle: String,
        #[arg(long)]
        soc0: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CyclesCommand {
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = hevtl::cycles::DEFAULT_DT)]
        dt: f64,
    },
    Synth {
        #[arg(long, default_value = "urban")]
        profile: Profile,
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Destination file; defaults to `<id>.csv` in the output directory.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| format!("expected SOCxTORQUE, got `{s}`"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((n(a)?, n(b)?))
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Domain { .. } => EXIT_CONFIG,
        Error::Parse { .. }
        | Error::CycleBounds { .. }
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Format(_) => EXIT_DATA,
        Error::Training { .. } | Error::NonFinite(_) | Error::InfeasiblePower { .. } | Error::BatteryLimit { .. } => {
            EXIT_TRAINING
        }
        Error::Incompatible(_) => EXIT_INCOMPATIBLE,
        Error::Actor { .. } | Error::Context { .. } => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_see_through_context() {
        let e = Error::Incompatible("x".into()).context("tl warm, seed 1");
        assert_eq!(exit_code(&e), EXIT_INCOMPATIBLE);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        let io = Error::Io(std::io::Error::other("x"));
        assert_eq!(exit_code(&io), EXIT_DATA);
        let t = Error::Training {
            iteration: 1,
            reason: "x".into(),
        };
        assert_eq!(exit_code(&t.context("a")), EXIT_TRAINING);
    }

    #[test]
    fn grid_argument() {
        assert_eq!(parse_grid("401x24"), Ok((401, 24)));
        assert!(parse_grid("401").is_err());
        assert!(parse_grid("ax2").is_err());
    }
}
