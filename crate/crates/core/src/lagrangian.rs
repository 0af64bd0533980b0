//! Relaxed-problem machinery: per-arm dual decomposition, subgradient
//! ascent on the transmission price, and the relaxed lower bound that
//! benchmarks every scheduler.
//!
//! Relaxing the per-slot channel constraint to hold only on average and
//! pricing it with a multiplier decomposes the fleet into independent
//! per-arm MDPs. The dual function `sum_n qbar_n(lambda) - lambda * M` is
//! concave; its value at any nonnegative price lower-bounds the optimum of
//! the original per-slot-constrained problem by weak duality.

use std::io::Write;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::arm::{gain_table, relative_value_iteration_from, GainTable, RviSolution};
use crate::error::{Error, Result};
use crate::markov::MarkovSource;
use crate::penalty::PenaltyTable;

/// One class of identical arms. Fleets repeat a few designs many times, so
/// solving per class and weighting by `count` keeps dual evaluations cheap.
#[derive(Debug, Clone)]
pub struct ArmClass {
    pub source: Arc<MarkovSource>,
    pub penalty: Arc<PenaltyTable>,
    pub count: usize,
}

impl ArmClass {
    pub fn new(source: Arc<MarkovSource>, penalty: Arc<PenaltyTable>, count: usize) -> Self {
        ArmClass {
            source,
            penalty,
            count,
        }
    }
}

/// Knobs for the dual ascent. The defaults follow the diminishing-step
/// subgradient scheme with unit base step.
#[derive(Debug, Clone)]
pub struct DualOptions {
    /// Base step size; round `t` uses `beta / t`.
    pub beta: f64,
    /// Subgradient rounds before giving up on the window criterion.
    pub max_rounds: usize,
    /// Trailing window checked for convergence.
    pub window: usize,
    /// Declare convergence when the window's price range is below this.
    pub window_tol: f64,
    /// Span tolerance of in-loop arm solves.
    pub solver_tol: f64,
    /// Span tolerance of the final solve at the returned price.
    pub final_tol: f64,
    /// Iteration cap per arm solve.
    pub solver_max_iter: usize,
    /// Re-solve arms when the price moved this far from the solved one;
    /// between solves, gains are corrected by the price shift.
    pub resolve_gap: f64,
    /// Seed of the occupancy sampler.
    pub seed: u64,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            beta: 1.0,
            max_rounds: 400,
            window: 200,
            window_tol: 1e-3,
            solver_tol: 1e-7,
            final_tol: 1e-9,
            solver_max_iter: 600,
            resolve_gap: 0.02,
            seed: 0,
        }
    }
}

/// One record of the ascent trajectory. `dual_value` is present on rounds
/// where the arms were re-solved at the current price.
#[derive(Debug, Clone, PartialEq)]
pub struct DualStep {
    pub round: usize,
    pub lambda: f64,
    pub subgradient: f64,
    pub dual_value: Option<f64>,
}

/// A solved arm class at the returned price.
#[derive(Debug)]
pub struct ClassSolve {
    pub solution: RviSolution,
    pub gains: GainTable,
}

/// Output of the dual ascent.
#[derive(Debug)]
pub struct DualResult {
    /// The returned price: the best dual value seen among solved rounds.
    pub lambda_star: f64,
    /// Dual value at `lambda_star` from the final tight solve.
    pub dual_value: f64,
    /// Optimal per-arm average costs at `lambda_star`, one entry per arm.
    pub per_arm_costs: Vec<f64>,
    /// Tight per-class solutions and gain tables at `lambda_star`, the
    /// precomputed inputs of the net-gain scheduler.
    pub per_class: Vec<ClassSolve>,
    pub trajectory: Vec<DualStep>,
    /// Whether the trailing-window criterion fired before `max_rounds`.
    pub converged: bool,
    pub rounds: usize,
}

impl DualResult {
    /// CSV export: `round,lambda,subgradient,dual_value`.
    pub fn write_trajectory_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "round,lambda,subgradient,dual_value")?;
        for step in &self.trajectory {
            match step.dual_value {
                Some(v) => writeln!(
                    w,
                    "{},{},{},{}",
                    step.round, step.lambda, step.subgradient, v
                )?,
                None => writeln!(w, "{},{},{},", step.round, step.lambda, step.subgradient)?,
            }
        }
        Ok(())
    }
}

/// The projected subgradient update
/// `lambda(t+1) = max(lambda(t) + beta/t * (sum_mu - m), 0)`.
pub fn dual_update(lambda: f64, beta: f64, t: usize, sum_mu: f64, m: usize) -> f64 {
    (lambda + beta / t as f64 * (sum_mu - m as f64)).max(0.0)
}

fn solve_class(
    class: &ArmClass,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<&RviSolution>,
) -> ClassSolve {
    let zeros;
    let h0: &[f64] = match warm {
        Some(sol) => sol.values(),
        None => {
            zeros = vec![0.0; class.penalty.delta_max() * class.source.n_states()];
            &zeros
        }
    };
    let solution =
        relative_value_iteration_from(&class.source, &class.penalty, lambda, tol, max_iter, h0);
    let gains = gain_table(&solution, &class.source, &class.penalty);
    ClassSolve { solution, gains }
}

/// The dual function at one price: solves every arm class and returns
/// `sum_n qbar_n(lambda) - lambda * M`. The per-arm decomposition carries
/// the constant price-times-budget term once, in the standard
/// single-multiplier form.
pub fn dual_value(arms: &[ArmClass], lambda: f64, m: usize) -> Result<f64> {
    Ok(dual_value_solves(arms, lambda, m, 1e-9, 50_000)?.0)
}

/// Tight per-class solves at a fixed price, with the dual value there.
/// This is the precomputation the net-gain scheduler consumes when the
/// price is supplied instead of optimized.
pub fn solve_at_price(arms: &[ArmClass], lambda: f64, m: usize) -> Result<(f64, Vec<ClassSolve>)> {
    dual_value_solves(arms, lambda, m, 1e-9, 50_000)
}

fn dual_value_solves(
    arms: &[ArmClass],
    lambda: f64,
    m: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<ClassSolve>)> {
    if lambda < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "price {lambda} must be nonnegative"
        )));
    }
    let solves: Vec<ClassSolve> = arms
        .iter()
        .map(|class| solve_class(class, lambda, tol, max_iter, None))
        .collect();
    let total: f64 = arms
        .iter()
        .zip(&solves)
        .map(|(class, s)| class.count as f64 * s.solution.avg_cost())
        .sum();
    Ok((total - lambda * m as f64, solves))
}

/// Offline dual subgradient ascent to the optimal transmission price.
///
/// Each round prices the channel constraint, reads the per-arm optimal
/// actions at state samples drawn from long-running per-arm simulations
/// under the current price-optimal policies, and takes a projected
/// diminishing step on the aggregate channel excess. Arm classes are
/// re-solved (warm-started) only when the price has drifted by more than
/// `resolve_gap` since their last solve; between solves, gains are shifted
/// by the price delta, which is exact to first order.
///
/// Convergence is declared when a trailing window of prices has range at
/// most `window_tol`. Otherwise the ascent returns best-so-far: the solved
/// round with the highest dual value. Either way the reported bound is a
/// valid lower bound by weak duality.
pub fn offline_dual_ascent(arms: &[ArmClass], m: usize, opts: &DualOptions) -> Result<DualResult> {
    if opts.beta <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "step size {} must be positive",
            opts.beta
        )));
    }
    if arms.is_empty() {
        return Err(Error::InvalidConfig("fleet has no arms".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);

    // long-running per-arm occupancy chains, one per arm instance
    let mut instances: Vec<(usize, usize, usize)> = Vec::new(); // (class, delta, obs)
    for (c, class) in arms.iter().enumerate() {
        for _ in 0..class.count {
            instances.push((c, 1, 0));
        }
    }

    let mut solves: Vec<ClassSolve> = arms
        .iter()
        .map(|class| solve_class(class, 0.0, opts.solver_tol, opts.solver_max_iter, None))
        .collect();
    let mut lambda_solved = 0.0f64;
    let all_converged = |solves: &[ClassSolve]| solves.iter().all(|s| s.solution.converged());

    let mut lambda = 0.0f64;
    let mut trajectory: Vec<DualStep> = Vec::with_capacity(opts.max_rounds);
    let mut best: Option<(f64, f64)> = None; // (dual value, lambda)
    let record_candidate = |solves: &[ClassSolve], lambda: f64, best: &mut Option<(f64, f64)>| {
        if !all_converged(solves) {
            return None;
        }
        let value: f64 = arms
            .iter()
            .zip(solves)
            .map(|(class, s)| class.count as f64 * s.solution.avg_cost())
            .sum::<f64>()
            - lambda * m as f64;
        if best.map(|(v, _)| value > v).unwrap_or(true) {
            *best = Some((value, lambda));
        }
        Some(value)
    };
    let mut round_value = record_candidate(&solves, lambda, &mut best);

    let mut converged = false;
    let mut rounds = 0;
    for t in 1..=opts.max_rounds {
        rounds = t;
        // re-solve lazily when the price drifted away from the solved one
        if (lambda - lambda_solved).abs() > opts.resolve_gap {
            for (class, slot) in arms.iter().zip(solves.iter_mut()) {
                *slot = solve_class(
                    class,
                    lambda,
                    opts.solver_tol,
                    opts.solver_max_iter,
                    Some(&slot.solution),
                );
            }
            lambda_solved = lambda;
            round_value = record_candidate(&solves, lambda, &mut best);
        }

        // aggregate optimal action at the sampled occupancy states,
        // gains corrected for the price drift since the last solve
        let drift = lambda - lambda_solved;
        let mut sum_mu = 0usize;
        let mut transmit = Vec::with_capacity(instances.len());
        for &(c, delta, obs) in &instances {
            let send = solves[c].gains.gain(delta, obs) - drift > 0.0;
            sum_mu += send as usize;
            transmit.push(send);
        }

        trajectory.push(DualStep {
            round: t,
            lambda,
            subgradient: sum_mu as f64 - m as f64,
            dual_value: round_value.take(),
        });

        lambda = dual_update(lambda, opts.beta, t, sum_mu as f64, m);

        // advance the occupancy chains one slot under the chosen actions
        for ((c, delta, obs), send) in instances.iter_mut().zip(&transmit) {
            let class = &arms[*c];
            let delta_max = class.penalty.delta_max();
            if *send && rng.random::<f64>() < class.source.success_prob() {
                let mut state = *obs;
                for _ in 0..*delta {
                    state = class.source.sample_step(state, &mut rng);
                }
                *obs = state;
                *delta = 1;
            } else {
                *delta = (*delta + 1).min(delta_max);
            }
        }

        if t >= opts.window {
            let tail = &trajectory[t - opts.window..];
            let lo = tail.iter().map(|s| s.lambda).fold(f64::INFINITY, f64::min);
            let hi = tail
                .iter()
                .map(|s| s.lambda)
                .fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= opts.window_tol && (lambda - lo).abs() <= opts.window_tol {
                converged = true;
                break;
            }
        }
    }

    let lambda_star = best.map(|(_, l)| l).unwrap_or(lambda);
    let (value, final_solves) =
        dual_value_solves(arms, lambda_star, m, opts.final_tol, opts.solver_max_iter * 20)?;
    let per_arm_costs: Vec<f64> = arms
        .iter()
        .zip(&final_solves)
        .flat_map(|(class, s)| std::iter::repeat_n(s.solution.avg_cost(), class.count))
        .collect();
    Ok(DualResult {
        lambda_star,
        dual_value: value,
        per_arm_costs,
        per_class: final_solves,
        trajectory,
        converged,
        rounds,
    })
}

/// The dual value certified by the ascent: a lower bound on the relaxed
/// optimum, hence on the time-average cost of every policy that meets the
/// per-slot channel constraint.
pub fn relaxed_lower_bound(result: &DualResult) -> f64 {
    result.dual_value
}
