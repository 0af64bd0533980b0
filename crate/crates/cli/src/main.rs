use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netgain_cli::commands;
use netgain_cli::config::Experiment;
use netgain_cli::output::OutDir;

/// Context-aware status-update scheduling experiments.
#[derive(Parser)]
#[command(name = "netgain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV files and sidecars.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation slots per replication.
    #[arg(long)]
    horizon: Option<u64>,
    /// Replications per simulated cell.
    #[arg(long)]
    reps: Option<usize>,
    /// Age-truncation horizon of penalty tables and solvers.
    #[arg(long)]
    delta_max: Option<usize>,
    /// Fleet size for single-fleet commands.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Penalty-vs-age curves for chosen observations.
    PenaltyCurve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Dual pre-solve: optimal price, relaxed bound, per-arm gain tables.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Solve at this fixed price instead of running the ascent.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Replicated simulation of one policy on the configured fleet.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scheduling policy: netgain, randomized, periodic, or maxage.
        #[arg(long)]
        policy: Option<String>,
        /// Also write the per-slot scheduling decisions of one run.
        #[arg(long)]
        trace: bool,
    },
    /// Policy comparison across fleet sizes.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fluid-scaling study: fleet and channels scaled together.
    Scale {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load(common: &CommonArgs) -> netgain_cli::Result<(Experiment, OutDir)> {
    let mut experiment = Experiment::load(&common.config, common.delta_max)?;
    if let Some(seed) = common.seed {
        experiment.config.seed = seed;
    }
    if let Some(horizon) = common.horizon {
        experiment.config.horizon = horizon;
    }
    if let Some(reps) = common.reps {
        experiment.config.replications = reps;
    }
    if let Some(n) = common.n {
        experiment.config.n = Some(n);
    }
    let out = OutDir::create(&common.out)?;
    Ok((experiment, out))
}

fn run(cli: Cli) -> netgain_cli::Result<()> {
    match cli.command {
        Command::PenaltyCurve { common } => {
            let (experiment, mut out) = load(&common)?;
            let summary = commands::cmd_penalty_curve(&experiment, &mut out)?;
            println!(
                "penalty-curve: {} states over delta 1..={}, stationary penalty {}",
                summary.states.len(),
                summary.delta_max,
                summary.stationary_penalty
            );
        }
        Command::Solve { common, lambda } => {
            let (experiment, mut out) = load(&common)?;
            let summary = commands::cmd_solve(&experiment, &mut out, lambda)?;
            println!(
                "solve: n={} lambda_star={} dual_value={} converged={}",
                summary.n, summary.lambda_star, summary.dual_value, summary.converged
            );
        }
        Command::Simulate {
            common,
            policy,
            trace,
        } => {
            let (experiment, mut out) = load(&common)?;
            let policy_name = policy
                .or_else(|| experiment.config.policies.first().cloned())
                .ok_or_else(|| netgain_cli::CliError::Config("no policy given".into()))?;
            let summary = commands::cmd_simulate(&experiment, &mut out, &policy_name, trace)?;
            println!(
                "simulate: policy={} n={} mean={} ci={}",
                summary.policy, summary.n, summary.mean_normalized_penalty, summary.ci95_half_width
            );
        }
        Command::Sweep { common } => {
            let (experiment, mut out) = load(&common)?;
            let summary = commands::cmd_sweep(&experiment, &mut out)?;
            println!(
                "sweep: {} fleet sizes x {} policies written",
                summary.n_values.len(),
                summary.policies.len()
            );
        }
        Command::Scale { common } => {
            let (experiment, mut out) = load(&common)?;
            let summary = commands::cmd_scale(&experiment, &mut out)?;
            println!(
                "scale: {} gammas, bound_per_arm={}",
                summary.rows.len(),
                summary.bound_per_arm
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({ "error": e.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
