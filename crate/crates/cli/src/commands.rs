//! The experiment commands: penalty curves, dual solves, single-fleet
//! simulations, the policy-comparison sweep, and the fluid-scaling study.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use netgain_core::arm::{write_solution_csv, GainTable};
use netgain_core::config::PolicySpec;
use netgain_core::lagrangian::{
    offline_dual_ascent, relaxed_lower_bound, solve_at_price, ClassSolve, DualResult,
};
use netgain_core::penalty::PenaltyTable;
use netgain_core::sim::{replicate, simulate, ArmSpec, FleetConfig, PolicyKind, ReplicationSummary};

use crate::config::{ClassArtifacts, Experiment};
use crate::output::{column_label, write_csv_row, OutDir};
use crate::seed::{mix, policy_tag, TAG_SCALE, TAG_SIMULATE, TAG_SOLVE};
use crate::{CliError, Result};

/// Default observations of the penalty-curve study: a scanner far from the
/// boundary, one heading toward it, one at it, and one entering the
/// cautious row.
const DEFAULT_CURVE_STATES: [&str; 4] = [
    "(1,3),right",
    "(2,3),down",
    "(3,3),down",
    "(4,3),down",
];

fn fleet_arms(
    experiment: &Experiment,
    counts: &[usize],
    gains: Option<&[Arc<GainTable>]>,
) -> Vec<ArmSpec> {
    let mut arms = Vec::new();
    for (c, (class, &count)) in experiment.classes.iter().zip(counts).enumerate() {
        for _ in 0..count {
            arms.push(ArmSpec {
                source: Arc::clone(&class.source),
                penalty: Arc::clone(&class.penalty),
                gains: gains.map(|g| Arc::clone(&g[c])),
                start_state: class.start_state,
            });
        }
    }
    arms
}

fn shared_gains(solves: &[ClassSolve]) -> Vec<Arc<GainTable>> {
    solves
        .iter()
        .map(|s| Arc::new(s.gains.clone()))
        .collect()
}

fn solve_fleet(experiment: &Experiment, counts: &[usize], seed: u64) -> Result<DualResult> {
    let arms = experiment.arm_classes(counts);
    let opts = experiment.config.dual.options(seed);
    Ok(offline_dual_ascent(&arms, experiment.config.m, &opts)?)
}

#[derive(Serialize)]
pub struct CurveSummary {
    pub class: String,
    pub states: Vec<String>,
    pub delta_max: usize,
    pub stationary_penalty: f64,
}

/// Penalty-vs-age curves for the requested observations.
pub fn cmd_penalty_curve(experiment: &Experiment, out: &mut OutDir) -> Result<CurveSummary> {
    let config = &experiment.config;
    let class = pick_curve_class(experiment)?;
    let descriptors: Vec<String> = config
        .curve_states
        .clone()
        .unwrap_or_else(|| DEFAULT_CURVE_STATES.iter().map(|s| s.to_string()).collect());
    let mut states = Vec::with_capacity(descriptors.len());
    for d in &descriptors {
        states.push(class.source.parse_state(d).map_err(CliError::Core)?);
    }
    let table: &PenaltyTable = &class.penalty;

    out.write_with("penalty_curve.csv", |w| {
        let mut header = vec!["delta".to_owned()];
        header.extend(states.iter().map(|&x| {
            format!("q_{}", column_label(&class.source.state_label(x)))
        }));
        write_csv_row(w, &header)?;
        for delta in 1..=table.delta_max() {
            let mut row = vec![delta.to_string()];
            row.extend(states.iter().map(|&x| table.q(delta, x).to_string()));
            write_csv_row(w, &row)?;
        }
        Ok(())
    })?;
    out.write_with("penalty_table.csv", |w| table.write_csv(w, &class.source))?;

    let summary = CurveSummary {
        class: class.name.clone(),
        states: descriptors,
        delta_max: table.delta_max(),
        stationary_penalty: table.stationary_penalty(),
    };
    out.write_sidecar("penalty-curve", config, config.seed, &summary)?;
    Ok(summary)
}

fn pick_curve_class(experiment: &Experiment) -> Result<&ClassArtifacts> {
    if let Some(name) = &experiment.config.curve_class {
        return experiment
            .classes
            .iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| CliError::Config(format!("curve_class `{name}` is not a class")));
    }
    Ok(experiment
        .classes
        .iter()
        .find(|c| c.fill)
        .unwrap_or(&experiment.classes[0]))
}

#[derive(Serialize)]
pub struct SolveSummary {
    pub n: usize,
    pub m: usize,
    pub lambda_star: f64,
    pub dual_value: f64,
    pub bound_per_arm: f64,
    pub converged: bool,
    pub rounds: usize,
    pub per_class_costs: Vec<ClassCost>,
}

#[derive(Serialize)]
pub struct ClassCost {
    pub class: String,
    pub count: usize,
    pub avg_cost: f64,
}

/// Dual pre-solve: the optimal price, the relaxed bound, and the per-class
/// value and gain tables the net-gain scheduler consumes.
pub fn cmd_solve(
    experiment: &Experiment,
    out: &mut OutDir,
    lambda: Option<f64>,
) -> Result<SolveSummary> {
    let config = &experiment.config;
    let counts = experiment.class_counts(None)?;
    let n: usize = counts.iter().sum();
    let seed = mix(config.seed, &[TAG_SOLVE, n as u64]);

    let (summary, solves, ascent) = match lambda {
        Some(price) => {
            let arms = experiment.arm_classes(&counts);
            let (value, solves) = solve_at_price(&arms, price, config.m)?;
            (
                SolveSummary {
                    n,
                    m: config.m,
                    lambda_star: price,
                    dual_value: value,
                    bound_per_arm: value / n.max(1) as f64,
                    converged: solves.iter().all(|s| s.solution.converged()),
                    rounds: 0,
                    per_class_costs: class_costs(experiment, &counts, &solves),
                },
                solves,
                None,
            )
        }
        None => {
            let mut result = solve_fleet(experiment, &counts, seed)?;
            let summary = SolveSummary {
                n,
                m: config.m,
                lambda_star: result.lambda_star,
                dual_value: relaxed_lower_bound(&result),
                bound_per_arm: relaxed_lower_bound(&result) / n.max(1) as f64,
                converged: result.converged,
                rounds: result.rounds,
                per_class_costs: class_costs(experiment, &counts, &result.per_class),
            };
            let solves = std::mem::take(&mut result.per_class);
            (summary, solves, Some(result))
        }
    };

    if let Some(result) = &ascent {
        out.write_with("dual_trajectory.csv", |w| result.write_trajectory_csv(w))?;
    }
    for (class, solve) in experiment.classes.iter().zip(&solves) {
        let name = format!("arm_{}.csv", column_label(&class.name));
        out.write_with(&name, |w| write_solution_csv(w, &solve.solution, &solve.gains))?;
    }
    out.write_sidecar("solve", config, config.seed, &summary)?;
    Ok(summary)
}

fn class_costs(
    experiment: &Experiment,
    counts: &[usize],
    solves: &[ClassSolve],
) -> Vec<ClassCost> {
    experiment
        .classes
        .iter()
        .zip(counts)
        .zip(solves)
        .map(|((class, &count), solve)| ClassCost {
            class: class.name.clone(),
            count,
            avg_cost: solve.solution.avg_cost(),
        })
        .collect()
}

#[derive(Serialize)]
pub struct SimulateSummary {
    pub policy: String,
    pub n: usize,
    pub m: usize,
    pub replications: usize,
    pub mean_normalized_penalty: f64,
    pub ci95_half_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
}

/// Replicated simulation of one policy on the configured fleet.
pub fn cmd_simulate(
    experiment: &Experiment,
    out: &mut OutDir,
    policy_name: &str,
    trace: bool,
) -> Result<SimulateSummary> {
    let config = &experiment.config;
    let counts = experiment.class_counts(None)?;
    let n: usize = counts.iter().sum();
    let policy = PolicySpec {
        policy: policy_name.to_owned(),
        buffer: config.buffer,
    }
    .kind()?;

    let (gains, lambda_star) = match policy {
        PolicyKind::Netgain => {
            let seed = mix(config.seed, &[TAG_SOLVE, n as u64]);
            let result = solve_fleet(experiment, &counts, seed)?;
            (Some(shared_gains(&result.per_class)), Some(result.lambda_star))
        }
        _ => (None, None),
    };

    let fleet = FleetConfig {
        arms: fleet_arms(experiment, &counts, gains.as_deref()),
        channels: config.m,
        horizon: config.horizon,
        warmup: config.warmup(),
        seed: mix(config.seed, &[TAG_SIMULATE, n as u64, policy_tag(policy_name)]),
        policy,
        record_aoi: false,
        record_decisions: false,
    };
    let summary = replicate(&fleet, config.replications)?;

    out.write_with("metrics.csv", |w| {
        netgain_core::sim::write_metrics_csv(w, &fleet, &summary)
    })?;

    if trace {
        let mut traced = fleet.clone();
        traced.record_decisions = true;
        let metrics = simulate(&traced)?;
        out.write_with("decisions.csv", |w| {
            writeln!(w, "slot,arm")?;
            for decision in metrics.decisions.as_deref().unwrap_or_default() {
                for &arm in &decision.scheduled {
                    writeln!(w, "{},{arm}", decision.slot)?;
                }
            }
            Ok(())
        })?;
    }

    let result = SimulateSummary {
        policy: policy_name.to_owned(),
        n,
        m: config.m,
        replications: config.replications,
        mean_normalized_penalty: summary.mean,
        ci95_half_width: summary.ci95_half_width,
        lambda_star,
    };
    out.write_sidecar("simulate", config, config.seed, &result)?;
    Ok(result)
}

#[derive(Serialize)]
pub struct SweepSummary {
    pub n_values: Vec<usize>,
    pub policies: Vec<String>,
    pub cells: Vec<SweepCell>,
    pub bounds: Vec<BoundRow>,
}

#[derive(Serialize)]
pub struct SweepCell {
    pub policy: String,
    pub n: usize,
    pub mean: f64,
    pub ci95_half_width: f64,
}

#[derive(Serialize)]
pub struct BoundRow {
    pub n: usize,
    pub lambda_star: f64,
    pub dual_value: f64,
    pub bound_per_arm: f64,
    pub converged: bool,
}

/// The policy-comparison sweep over fleet sizes: every configured policy
/// is simulated at every `n`, with a fresh dual pre-solve per fleet for
/// the net-gain scheduler.
pub fn cmd_sweep(experiment: &Experiment, out: &mut OutDir) -> Result<SweepSummary> {
    let config = &experiment.config;
    let n_values = config
        .sweep_n
        .clone()
        .ok_or_else(|| CliError::Config("sweep requires sweep_n".into()))?;
    if n_values.is_empty() {
        return Err(CliError::Config("sweep_n is empty".into()));
    }
    let policies = config.policies.clone();
    let mut cells = Vec::new();
    let mut bounds = Vec::new();

    for &n in &n_values {
        let counts = experiment.class_counts(Some(n))?;
        let netgain_solve = if policies.iter().any(|p| p == "netgain") {
            let seed = mix(config.seed, &[TAG_SOLVE, n as u64]);
            let result = solve_fleet(experiment, &counts, seed)?;
            bounds.push(BoundRow {
                n,
                lambda_star: result.lambda_star,
                dual_value: result.dual_value,
                bound_per_arm: result.dual_value / n as f64,
                converged: result.converged,
            });
            Some(result)
        } else {
            None
        };

        for policy_name in &policies {
            let policy = PolicySpec {
                policy: policy_name.clone(),
                buffer: config.buffer,
            }
            .kind()?;
            let gains = match policy {
                PolicyKind::Netgain => {
                    Some(shared_gains(&netgain_solve.as_ref().unwrap().per_class))
                }
                _ => None,
            };
            let fleet = FleetConfig {
                arms: fleet_arms(experiment, &counts, gains.as_deref()),
                channels: config.m,
                horizon: config.horizon,
                warmup: config.warmup(),
                seed: mix(
                    config.seed,
                    &[TAG_SIMULATE, n as u64, policy_tag(policy_name)],
                ),
                policy,
                record_aoi: false,
                record_decisions: false,
            };
            let summary: ReplicationSummary = replicate(&fleet, config.replications)?;
            println!(
                "sweep n={n} policy={policy_name} mean={:.6} ci={:.6}",
                summary.mean, summary.ci95_half_width
            );
            cells.push(SweepCell {
                policy: policy_name.clone(),
                n,
                mean: summary.mean,
                ci95_half_width: summary.ci95_half_width,
            });
        }
    }

    out.write_with("sweep.csv", |w| {
        writeln!(
            w,
            "policy,n,m,reps,horizon,mean_normalized_penalty,ci95_half_width"
        )?;
        for cell in &cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                cell.policy,
                cell.n,
                config.m,
                config.replications,
                config.horizon,
                cell.mean,
                cell.ci95_half_width
            )?;
        }
        Ok(())
    })?;
    if !bounds.is_empty() {
        out.write_with("sweep_bounds.csv", |w| {
            writeln!(w, "n,m,lambda_star,dual_value,bound_per_arm,ascent_converged")?;
            for b in &bounds {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    b.n, config.m, b.lambda_star, b.dual_value, b.bound_per_arm, b.converged
                )?;
            }
            Ok(())
        })?;
    }

    let summary = SweepSummary {
        n_values,
        policies,
        cells,
        bounds,
    };
    out.write_sidecar("sweep", config, config.seed, &summary)?;
    Ok(summary)
}

#[derive(Serialize)]
pub struct ScaleSummary {
    pub base_n: usize,
    pub base_m: usize,
    pub lambda_star: f64,
    pub bound_per_arm: f64,
    pub rows: Vec<ScaleRow>,
}

#[derive(Serialize)]
pub struct ScaleRow {
    pub gamma: usize,
    pub n: usize,
    pub m: usize,
    pub mean_per_arm_cost: f64,
    pub ci95_half_width: f64,
    pub gap_ratio: f64,
}

/// Arms-per-class and channel counts both scale by `gamma`; the relaxed
/// per-arm bound is scale-invariant, so the per-arm optimality gap of the
/// net-gain policy is directly comparable across `gamma`.
pub fn cmd_scale(experiment: &Experiment, out: &mut OutDir) -> Result<ScaleSummary> {
    const ARM_CAP: usize = 4000;
    let config = &experiment.config;
    let gammas = config
        .gammas
        .clone()
        .ok_or_else(|| CliError::Config("scale requires gammas".into()))?;
    if gammas.is_empty() || gammas.contains(&0) {
        return Err(CliError::Config("gammas must be positive integers".into()));
    }
    let counts = experiment.class_counts(None)?;
    let base_n: usize = counts.iter().sum();

    let seed = mix(config.seed, &[TAG_SOLVE, base_n as u64]);
    let solve = solve_fleet(experiment, &counts, seed)?;
    let bound_per_arm = solve.dual_value / base_n as f64;
    let gains = shared_gains(&solve.per_class);

    let mut rows = Vec::new();
    for &gamma in &gammas {
        let n = base_n * gamma;
        if n > ARM_CAP {
            return Err(CliError::Config(format!(
                "gamma {gamma} scales the fleet to {n} arms, above the cap of {ARM_CAP}"
            )));
        }
        let scaled_counts: Vec<usize> = counts.iter().map(|&c| c * gamma).collect();
        let fleet = FleetConfig {
            arms: fleet_arms(experiment, &scaled_counts, Some(&gains)),
            channels: config.m * gamma,
            horizon: config.horizon,
            warmup: config.warmup(),
            seed: mix(config.seed, &[TAG_SCALE, gamma as u64]),
            policy: PolicyKind::Netgain,
            record_aoi: false,
            record_decisions: false,
        };
        let summary = replicate(&fleet, config.replications)?;
        let gap_ratio = (summary.mean - bound_per_arm) / bound_per_arm.max(1e-9);
        println!(
            "scale gamma={gamma} mean={:.6} bound={:.6} gap_ratio={:.4}",
            summary.mean, bound_per_arm, gap_ratio
        );
        rows.push(ScaleRow {
            gamma,
            n,
            m: config.m * gamma,
            mean_per_arm_cost: summary.mean,
            ci95_half_width: summary.ci95_half_width,
            gap_ratio,
        });
    }

    out.write_with("scale.csv", |w| {
        writeln!(
            w,
            "gamma,n,m,mean_per_arm_cost,ci95_half_width,bound_per_arm,gap_ratio"
        )?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.gamma, r.n, r.m, r.mean_per_arm_cost, r.ci95_half_width, bound_per_arm,
                r.gap_ratio
            )?;
        }
        Ok(())
    })?;

    let summary = ScaleSummary {
        base_n,
        base_m: config.m,
        lambda_star: solve.lambda_star,
        bound_per_arm,
        rows,
    };
    out.write_sidecar("scale", config, config.seed, &summary)?;
    Ok(summary)
}
