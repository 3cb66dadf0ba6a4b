//! Command-line front end: configuration loading, the subcommands and the
//! figure recipes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input (including
//! command-line usage errors), 3 a reproduced figure failed an acceptance
//! check.

pub mod commands;
pub mod config;
pub mod recipes;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pinoma_core::mobility::MobilityKind;
use thiserror::Error;

use crate::commands::{SweepVar, TrackSpec};
use crate::config::ConfigArgs;
use crate::recipes::{Figure, RecipeOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(pinoma_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Acceptance(String),
}

impl From<pinoma_core::Error> for CliError {
    fn from(e: pinoma_core::Error) -> Self {
        match e {
            pinoma_core::Error::Io(io) => Self::Io(io),
            other => Self::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Core(pinoma_core::Error::InvalidParameter { .. }) => 2,
            Self::Acceptance(_) => 3,
            Self::Core(_) | Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pinoma",
    version,
    about = "Position-information NOMA: analysis, power control, tracking and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form quantities for the configured pair.
    Analyze(ConfigArgs),
    /// One Monte Carlo run of the configured access arm.
    Simulate(ConfigArgs),
    /// Monte Carlo runs over one parameter.
    Sweep(SweepArgs),
    /// Kalman tracking accuracy for one mobility model.
    Track(TrackArgs),
    /// Regenerate a figure or table and evaluate its acceptance checks.
    Reproduce(ReproduceArgs),
    /// Print the effective configuration as TOML.
    ShowConfig(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum)]
    pub var: SweepVar,
    /// Comma-separated values; alternative to --from/--to/--points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["from", "to", "points"])]
    pub values: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true, requires_all = ["to", "points"])]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// rw, rwp or gm.
    #[arg(long, default_value = "gm")]
    pub mobility: String,
    #[arg(long, default_value_t = 50.0)]
    pub sigma_ob2: f64,
    /// Process-noise intensity; defaults to the calibrated value of the model.
    #[arg(long)]
    pub sigma_w2: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    #[arg(long, default_value_t = pinoma_core::mobility::DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Fraction of slots with a position report.
    #[arg(long, default_value_t = 1.0)]
    pub feedback_rate: f64,
    #[arg(long, default_value_t = recipes::DEFAULT_SEED)]
    pub seed: u64,
    /// Write the first run's estimates here.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Write the first run's true trajectory here.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Monte Carlo trials per static sweep point.
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    /// Trajectories per mobile sweep point.
    #[arg(long, default_value_t = recipes::MOBILE_TRIALS)]
    pub mobile_trials: u64,
    #[arg(long, default_value_t = recipes::DEFAULT_SEED)]
    pub seed: u64,
    /// Directory for `<figure>.csv` and `<figure>_checks.csv`.
    #[arg(long, env = "PINOMA_OUT_DIR", default_value = "results")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Writes to the file when given, otherwise to stdout.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(0) => Err(CliError::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = args.load()?;
            let q = commands::analyze(&cfg)?;
            emit(cfg.run.output.as_deref(), &commands::to_csv(&q)?)
        }
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let rows = with_threads(cfg.run.threads, || commands::simulate(&cfg))?;
            emit(cfg.run.output.as_deref(), &commands::results_csv(&rows)?)
        }
        Command::Sweep(args) => {
            let cfg = args.config.load()?;
            let values = match (&args.values, args.from, args.to, args.points) {
                (Some(v), ..) => v.clone(),
                (None, Some(a), Some(b), Some(n)) => commands::linspace(a, b, n),
                _ => return Err(CliError::Config("sweep needs --values or --from/--to/--points".into())),
            };
            let rows = with_threads(cfg.run.threads, || commands::sweep(&cfg, args.var, &values))?;
            emit(cfg.run.output.as_deref(), &commands::results_csv(&rows)?)
        }
        Command::Track(args) => {
            let kind: MobilityKind = args.mobility.parse().map_err(CliError::Config)?;
            let spec = TrackSpec {
                kind,
                sigma_ob2: args.sigma_ob2,
                sigma_w2: args.sigma_w2,
                runs: args.runs,
                horizon: args.horizon,
                feedback_rate: args.feedback_rate,
                seed: args.seed,
            };
            let (summary, estimates, trajectories) = with_threads(args.threads, || commands::track(&spec))?;
            if let Some(p) = &args.estimates {
                std::fs::write(p, estimates)?;
            }
            if let Some(p) = &args.trajectories {
                std::fs::write(p, trajectories)?;
            }
            emit(None, &commands::to_csv(&[summary])?)
        }
        Command::Reproduce(args) => {
            let opts = RecipeOptions {
                trials: args.trials,
                mobile_trials: args.mobile_trials,
                seed: args.seed,
            };
            if opts.trials == 0 || opts.mobile_trials == 0 {
                return Err(CliError::Config("trial counts must be at least 1".into()));
            }
            let rep = with_threads(args.threads, || recipes::reproduce(args.figure, &opts))?;
            std::fs::create_dir_all(&args.out_dir)?;
            let name = args.figure.name();
            std::fs::write(
                args.out_dir.join(format!("{name}.csv")),
                commands::results_csv(&rep.rows)?,
            )?;
            std::fs::write(
                args.out_dir.join(format!("{name}_checks.csv")),
                commands::to_csv(&rep.checks)?,
            )?;
            let mut out = std::io::stdout().lock();
            for c in &rep.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                writeln!(out, "criterion {:>2} {verdict}: {}: {}", c.criterion, c.name, c.detail)?;
            }
            if rep.passed() {
                Ok(())
            } else {
                let failed = rep.checks.iter().filter(|c| !c.passed).count();
                Err(CliError::Acceptance(format!(
                    "{name}: {failed} acceptance check(s) failed"
                )))
            }
        }
        Command::ShowConfig(args) => {
            let cfg = args.load()?;
            emit(cfg.run.output.as_deref(), cfg.to_toml().as_bytes())
        }
    }
}
