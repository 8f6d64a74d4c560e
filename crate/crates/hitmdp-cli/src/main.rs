//! `hitmdp` — solve, analyze, and simulate discounted hitting-time control
//! problems described by TOML model files.
//!
//! Exit codes: 0 success, 2 validation failure, 3 non-convergence,
//! 4 I/O or malformed input.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hitmdp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file against every structural invariant.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Write the violation table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the optimal value and policy by certified value iteration.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// Target on the certified weighted gap to the optimum.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = WeightChoice::Unit)]
        weight: WeightChoice,
        /// Write the per-state table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Study rolling-horizon policies across a range of horizons.
    Rolling {
        #[arg(long)]
        model: PathBuf,
        /// Single horizon; alternative to --horizon-range.
        #[arg(long, conflicts_with = "horizon_range")]
        horizon: Option<usize>,
        /// Inclusive range, e.g. 1..10.
        #[arg(long, value_parser = HorizonRange::from_str)]
        horizon_range: Option<HorizonRange>,
        /// Tolerance for the optimal reference policy.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = WeightChoice::Unit)]
        weight: WeightChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample trajectories under a policy and aggregate cost and
    /// hitting-time statistics.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// `optimal`, `rolling:<N>`, or `file:<path>`.
        #[arg(long, value_parser = PolicySource::from_str)]
        policy: PolicySource,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        max_steps: usize,
        /// Starting state name; defaults to the first non-target state.
        #[arg(long)]
        initial_state: Option<String>,
        /// Tolerance for solving the optimal policy when requested.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the average per-excursion recovery cost and its bounds.
    Recovery {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 32)]
        runs: usize,
        /// Excursions simulated per run.
        #[arg(long, default_value_t = 64)]
        excursions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        max_steps: usize,
        /// Starting state name; defaults to the first target state.
        #[arg(long)]
        initial_state: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightChoice {
    /// Unit weight.
    Unit,
    /// The weight vector bundled in the model file.
    Model,
}

#[derive(Clone, Copy)]
struct HorizonRange {
    first: usize,
    last: usize,
}

impl FromStr for HorizonRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected <first>..<last>, got {s:?}"))?;
        let first = a.parse().map_err(|e| format!("bad range start: {e}"))?;
        let last = b.parse().map_err(|e| format!("bad range end: {e}"))?;
        if first > last {
            return Err(format!("empty horizon range {s:?}"));
        }
        Ok(Self { first, last })
    }
}

#[derive(Clone)]
enum PolicySource {
    Optimal,
    Rolling(usize),
    File(PathBuf),
}

impl FromStr for PolicySource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "optimal" {
            return Ok(Self::Optimal);
        }
        if let Some(n) = s.strip_prefix("rolling:") {
            return n
                .parse()
                .map(Self::Rolling)
                .map_err(|e| format!("bad rolling horizon: {e}"));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Self::File(PathBuf::from(path)));
        }
        Err(format!(
            "expected optimal, rolling:<N>, or file:<path>, got {s:?}"
        ))
    }
}

/// Failure modes, each with its documented exit code.
enum CliError {
    /// Model or policy data violates an invariant (exit 2).
    Validation(String),
    /// An iteration budget ran out before its certificate was met (exit 3).
    NonConvergence(String),
    /// Unreadable, unwritable, or malformed files (exit 4).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NonConvergence(m) | CliError::Io(m) => m,
        }
    }
}

impl From<hitmdp::LoadError> for CliError {
    fn from(e: hitmdp::LoadError) -> Self {
        match &e {
            hitmdp::LoadError::Validation(invalid) => {
                let lines: Vec<String> = invalid.0.iter().map(|v| v.to_string()).collect();
                CliError::Validation(lines.join("\n"))
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<hitmdp::EvalError> for CliError {
    fn from(e: hitmdp::EvalError) -> Self {
        match e {
            hitmdp::EvalError::IterationLimit { .. } => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<hitmdp::SimError> for CliError {
    fn from(e: hitmdp::SimError) -> Self {
        match e {
            hitmdp::SimError::ExcursionStalled { .. } => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { model, out } => commands::validate(&model, out.as_deref()),
        Command::Solve {
            model,
            tol,
            max_iter,
            weight,
            out,
        } => commands::solve(&model, tol, max_iter, weight, out.as_deref()),
        Command::Rolling {
            model,
            horizon,
            horizon_range,
            tol,
            weight,
            out,
        } => {
            let range = match (horizon, horizon_range) {
                (Some(n), _) => (n, n),
                (None, Some(r)) => (r.first, r.last),
                (None, None) => (0, 10),
            };
            commands::rolling(&model, range, tol, weight, out.as_deref())
        }
        Command::Simulate {
            model,
            policy,
            runs,
            seed,
            max_steps,
            initial_state,
            tol,
            out,
        } => commands::simulate(
            &model,
            &policy,
            runs,
            seed,
            max_steps,
            initial_state.as_deref(),
            tol,
            out.as_deref(),
        ),
        Command::Recovery {
            model,
            runs,
            excursions,
            seed,
            max_steps,
            initial_state,
            tol,
            out,
        } => commands::recovery(
            &model,
            runs,
            excursions,
            seed,
            max_steps,
            initial_state.as_deref(),
            tol,
            out.as_deref(),
        ),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
