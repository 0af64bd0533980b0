//! The per-arm average-cost MDP: given a transmission price, solve for the
//! relative value function by relative value iteration, derive the gain
//! table that drives scheduling, and cross-check tiny instances against an
//! exhaustive policy-enumeration oracle.
//!
//! Arm state is `(delta, x)`: the age of the last delivered observation and
//! the observation itself. Not transmitting ages the state by one slot.
//! Transmitting succeeds with the channel probability `p`; on success the
//! age resets to 1 and the new observation is distributed as the
//! `delta`-step kernel from `x` (the sample generated at the decision slot
//! arrives one slot later, having aged `delta` slots relative to the
//! previous observation). Ages are truncated at the table horizon, with
//! `h(delta_max + 1, x) := h(delta_max, x)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::markov::MarkovSource;
use crate::matrix::{recurrent_classes, solve_linear};
use crate::penalty::PenaltyTable;

/// State of one arm as the scheduler sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmState {
    /// Age of information, at least 1.
    pub delta: usize,
    /// Index of the last delivered observation.
    pub obs: usize,
}

impl ArmState {
    pub fn new(delta: usize, obs: usize) -> Self {
        ArmState { delta, obs }
    }
}

/// Converged output of relative value iteration.
#[derive(Debug, Clone)]
pub struct RviSolution {
    h: Vec<f64>,
    avg_cost: f64,
    lambda: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    delta_max: usize,
    n_states: usize,
}

impl RviSolution {
    /// Relative value at `(delta, x)`; the reference state `(1, 0)` is 0.
    pub fn h(&self, delta: usize, x: usize) -> f64 {
        debug_assert!(delta >= 1 && delta <= self.delta_max);
        self.h[(delta - 1) * self.n_states + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    /// Optimal average cost of the arm at this price.
    pub fn avg_cost(&self) -> f64 {
        self.avg_cost
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Span seminorm of the last value-iteration difference.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// False when the iteration cap was hit before the span tolerance; the
    /// estimates are then best-so-far and `residual` reports the gap.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn delta_max(&self) -> usize {
        self.delta_max
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
}

/// Gain of transmitting at each `(delta, x)`: the difference of relative
/// action values `Q(delta, x, 0) - Q(delta, x, 1)` at the solved price.
/// Positive gain means transmitting is strictly better there.
#[derive(Debug, Clone)]
pub struct GainTable {
    alpha: Vec<f64>,
    lambda: f64,
    delta_max: usize,
    n_states: usize,
}

impl GainTable {
    /// Assembles a gain table from raw values, `(delta-1) * n_states + x`
    /// major order.
    pub fn from_parts(
        alpha: Vec<f64>,
        lambda: f64,
        delta_max: usize,
        n_states: usize,
    ) -> Result<Self> {
        if alpha.len() != delta_max * n_states || delta_max == 0 || n_states == 0 {
            return Err(Error::InvalidConfig(format!(
                "gain table needs {delta_max} x {n_states} entries, got {}",
                alpha.len()
            )));
        }
        Ok(GainTable {
            alpha,
            lambda,
            delta_max,
            n_states,
        })
    }

    /// Gain at `(delta, x)`, with the age clamped into the table horizon.
    pub fn gain(&self, delta: usize, x: usize) -> f64 {
        let delta = delta.clamp(1, self.delta_max);
        self.alpha[(delta - 1) * self.n_states + x]
    }

    /// Whether transmitting is strictly better at this state.
    pub fn transmit(&self, delta: usize, x: usize) -> bool {
        self.gain(delta, x) > 0.0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta_max(&self) -> usize {
        self.delta_max
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn min_gain(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check_shapes(source: &MarkovSource, table: &PenaltyTable) {
    assert_eq!(
        source.n_states(),
        table.n_states(),
        "penalty table and source disagree on the state count"
    );
}

/// Damping factor of the aperiodicity transformation used inside the value
/// iteration: optimal-policy chains can be periodic (always-transmit on a
/// reliable channel cycles with period two), and the half-step keeps the
/// span contraction geometric regardless.
const DAMPING: f64 = 0.5;

/// The raw Bellman image `T h`, without renormalization.
fn backup_raw(
    h: &[f64],
    table: &PenaltyTable,
    source: &MarkovSource,
    lambda: f64,
    new_h: &mut [f64],
    reach: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) {
    let n = source.n_states();
    let delta_max = table.delta_max();
    let p = source.success_prob();
    reach.clear();
    reach.extend_from_slice(&h[..n]); // becomes P^delta · h(1, ·) incrementally
    for delta in 1..=delta_max {
        source.transition().mul_vec(reach, scratch);
        std::mem::swap(reach, scratch);
        let next = delta.min(delta_max - 1); // row index of delta+1, clamped
        for x in 0..n {
            let q = table.q(delta, x);
            let h_next = h[next * n + x];
            let q_idle = q + h_next;
            let q_send = q + (1.0 - p) * h_next + p * reach[x] + lambda;
            new_h[(delta - 1) * n + x] = q_idle.min(q_send);
        }
    }
}

/// One synchronous Bellman backup with reference-state renormalization.
///
/// Returns the renormalized new value function and the average-cost
/// estimate `(T h)(ref) - h(ref)`. The explicit average-cost term of the
/// optimality equation is absorbed by the renormalization since only value
/// differences matter.
pub fn bellman_backup(
    h: &[f64],
    table: &PenaltyTable,
    source: &MarkovSource,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = source.n_states();
    let delta_max = table.delta_max();
    check_shapes(source, table);
    assert_eq!(h.len(), delta_max * n, "value function has the wrong shape");
    let mut new_h = vec![0.0; delta_max * n];
    let mut reach = Vec::with_capacity(n);
    let mut scratch = vec![0.0; n];
    backup_raw(h, table, source, lambda, &mut new_h, &mut reach, &mut scratch);
    let gain_estimate = new_h[0] - h[0];
    let offset = new_h[0];
    for v in &mut new_h {
        *v -= offset;
    }
    (new_h, gain_estimate)
}

/// Relative value iteration from a zero start.
pub fn relative_value_iteration(
    source: &MarkovSource,
    table: &PenaltyTable,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> RviSolution {
    let zeros = vec![0.0; table.delta_max() * source.n_states()];
    relative_value_iteration_from(source, table, lambda, tol, max_iter, &zeros)
}

/// Cap on policy-improvement rounds in the accelerated path.
const POLICY_ROUNDS: usize = 60;

/// Greedy policy of a value function: `transmit[(delta-1)*n + x]`.
/// Ties keep the incumbent action, the standard anti-cycling rule.
fn greedy_policy(
    h: &[f64],
    table: &PenaltyTable,
    source: &MarkovSource,
    lambda: f64,
    incumbent: Option<&[bool]>,
) -> Vec<bool> {
    let n = source.n_states();
    let delta_max = table.delta_max();
    let p = source.success_prob();
    let mut policy = vec![false; delta_max * n];
    let mut reach = h[..n].to_vec();
    let mut scratch = vec![0.0; n];
    for delta in 1..=delta_max {
        source.transition().mul_vec(&reach, &mut scratch);
        std::mem::swap(&mut reach, &mut scratch);
        let next = delta.min(delta_max - 1);
        for x in 0..n {
            let s = (delta - 1) * n + x;
            let h_next = h[next * n + x];
            let q_idle = h_next;
            let q_send = (1.0 - p) * h_next + p * reach[x] + lambda;
            policy[s] = if (q_send - q_idle).abs() <= 1e-13 {
                incumbent.map(|inc| inc[s]).unwrap_or(false)
            } else {
                q_send < q_idle
            };
        }
    }
    policy
}

/// Exact policy evaluation via the age-chain structure.
///
/// For a fixed policy, backward induction over the age expresses every
/// value as `A + B*g + C . h(1,.)`; the age-1 closure plus the reference
/// normalization is then an (n+1)-dimensional linear solve. Only applies
/// when the policy transmits at the truncation age for every observation
/// (otherwise the truncated chain splits into classes); returns None there
/// or when the system is singular.
fn evaluate_policy(
    policy: &[bool],
    table: &PenaltyTable,
    source: &MarkovSource,
    lambda: f64,
) -> Option<Vec<f64>> {
    let n = source.n_states();
    let delta_max = table.delta_max();
    let p = source.success_prob();
    for x in 0..n {
        if !policy[(delta_max - 1) * n + x] {
            return None;
        }
    }
    source.warm_powers(delta_max);

    // Backward accumulation of h(delta, x) = A(x) + B(x) g + C(x,.) h1.
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n * n];
    {
        let kernel = source.power(delta_max);
        for x in 0..n {
            a[x] = (table.q(delta_max, x) + lambda) / p;
            b[x] = -1.0 / p;
            c[x * n..(x + 1) * n].copy_from_slice(kernel.row(x));
        }
    }
    for delta in (1..delta_max).rev() {
        let kernel = source.power(delta);
        for x in 0..n {
            let q = table.q(delta, x);
            let row = &mut c[x * n..(x + 1) * n];
            if policy[(delta - 1) * n + x] {
                a[x] = q + lambda + (1.0 - p) * a[x];
                b[x] = -1.0 + (1.0 - p) * b[x];
                for (cv, &kv) in row.iter_mut().zip(kernel.row(x)) {
                    *cv = (1.0 - p) * *cv + p * kv;
                }
            } else {
                a[x] += q;
                b[x] -= 1.0;
            }
        }
    }

    // Closure: (I - C) h1 - B g = A, with h1(ref) = 0.
    let m = n + 1;
    let mut sys = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for x in 0..n {
        for x2 in 0..n {
            sys[x * m + x2] = -c[x * n + x2];
        }
        sys[x * m + x] += 1.0;
        sys[x * m + n] = -b[x];
        rhs[x] = a[x];
    }
    sys[n * m] = 1.0; // h1(ref) = 0
    rhs[n] = 0.0;
    let solved = solve_linear(&mut sys, &mut rhs, m)?;
    let (h1, g) = (&solved[..n], solved[n]);

    // Reconstruct the full value function from (h1, g).
    let mut h = vec![0.0; delta_max * n];
    let mut reach = h1.to_vec();
    let mut scratch = vec![0.0; n];
    let mut reach_all = vec![0.0; delta_max * n];
    for delta in 1..=delta_max {
        source.transition().mul_vec(&reach, &mut scratch);
        std::mem::swap(&mut reach, &mut scratch);
        reach_all[(delta - 1) * n..delta * n].copy_from_slice(&reach);
    }
    for x in 0..n {
        let s = (delta_max - 1) * n + x;
        h[s] = (table.q(delta_max, x) + lambda - g) / p + reach_all[s];
    }
    for delta in (1..delta_max).rev() {
        for x in 0..n {
            let s = (delta - 1) * n + x;
            let h_next = h[delta * n + x];
            let q = table.q(delta, x);
            h[s] = if policy[s] {
                q + lambda - g + (1.0 - p) * h_next + p * reach_all[s]
            } else {
                q - g + h_next
            };
        }
    }
    let offset = h[0];
    for v in &mut h {
        *v -= offset;
    }
    Some(h)
}

/// Relative value iteration from a warm start, e.g. the solution at a
/// nearby price.
///
/// The accelerated path alternates exact policy evaluation with policy
/// improvement, and certifies every candidate with the exact synchronous
/// Bellman difference: the returned solution always satisfies
/// `span(T h - h) = residual`, which brackets the true average cost within
/// `tol` on success. Policies the evaluation cannot handle (idling forever
/// somewhere, e.g. under a prohibitive price) fall back to damped
/// synchronous backups. Hitting `max_iter` first returns the best-so-far
/// solution with `converged() == false`.
pub fn relative_value_iteration_from(
    source: &MarkovSource,
    table: &PenaltyTable,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    h0: &[f64],
) -> RviSolution {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = source.n_states();
    let delta_max = table.delta_max();
    check_shapes(source, table);
    let size = delta_max * n;
    assert_eq!(h0.len(), size, "warm start has the wrong shape");

    let mut h = h0.to_vec();
    let offset = h[0];
    for v in &mut h {
        *v -= offset;
    }
    let mut image = vec![0.0; size];
    let mut reach = Vec::with_capacity(n);
    let mut scratch = vec![0.0; n];

    let span_and_estimate = |image: &[f64], h: &[f64]| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (new, old) in image.iter().zip(h) {
            let d = new - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (hi - lo, image[0] - h[0])
    };

    let mut iterations = 0usize;
    let mut converged = false;

    // initial certificate doubles as the average-cost seed
    backup_raw(&h, table, source, lambda, &mut image, &mut reach, &mut scratch);
    iterations += 1;
    let (mut residual, mut avg_cost) = span_and_estimate(&image, &h);
    if residual <= tol {
        converged = true;
        h.copy_from_slice(&image);
    }

    // policy-iteration fast path
    if !converged {
        let mut policy = greedy_policy(&h, table, source, lambda, None);
        let mut tried_always_transmit = false;
        for _ in 0..POLICY_ROUNDS {
            if iterations >= max_iter {
                break;
            }
            let evaluated = match evaluate_policy(&policy, table, source, lambda) {
                Some(evaluated) => evaluated,
                // A cold start greedily idles everywhere; reseed once from
                // the always-transmit policy, which is always evaluable.
                None if !tried_always_transmit => {
                    tried_always_transmit = true;
                    policy = vec![true; size];
                    continue;
                }
                None => break,
            };
            h = evaluated;
            iterations += 1;
            backup_raw(&h, table, source, lambda, &mut image, &mut reach, &mut scratch);
            iterations += 1;
            let (span, estimate) = span_and_estimate(&image, &h);
            residual = span;
            avg_cost = estimate;
            if span <= tol {
                converged = true;
                h.copy_from_slice(&image);
                break;
            }
            let improved = greedy_policy(&h, table, source, lambda, Some(&policy));
            if improved == policy {
                break;
            }
            policy = improved;
        }
    }

    // damped synchronous backups: slow, but correct for every structure
    while !converged && iterations < max_iter {
        backup_raw(&h, table, source, lambda, &mut image, &mut reach, &mut scratch);
        iterations += 1;
        let (span, estimate) = span_and_estimate(&image, &h);
        residual = span;
        avg_cost = estimate;
        if span <= tol {
            converged = true;
            h.copy_from_slice(&image);
            break;
        }
        for (old, &new) in h.iter_mut().zip(image.iter()) {
            *old = (1.0 - DAMPING) * *old + DAMPING * new;
        }
        let offset = h[0];
        for v in &mut h {
            *v -= offset;
        }
    }

    let offset = h[0];
    for v in &mut h {
        *v -= offset;
    }
    RviSolution {
        h,
        avg_cost,
        lambda,
        residual,
        iterations,
        converged,
        delta_max,
        n_states: n,
    }
}

/// Derives the gain table from a solved arm:
/// `alpha(delta, x) = p * (h(delta+1, x) - E[h(1, X') | delta, x]) - lambda`.
pub fn gain_table(sol: &RviSolution, source: &MarkovSource, table: &PenaltyTable) -> GainTable {
    let n = source.n_states();
    let delta_max = table.delta_max();
    check_shapes(source, table);
    assert_eq!(sol.n_states, n);
    assert_eq!(sol.delta_max, delta_max);
    let p = source.success_prob();
    let lambda = sol.lambda;

    let mut alpha = vec![0.0; delta_max * n];
    let mut reach = sol.h[..n].to_vec();
    let mut scratch = vec![0.0; n];
    for delta in 1..=delta_max {
        source.transition().mul_vec(&reach, &mut scratch);
        std::mem::swap(&mut reach, &mut scratch);
        let next = delta.min(delta_max - 1);
        for x in 0..n {
            alpha[(delta - 1) * n + x] = p * (sol.h[next * n + x] - reach[x]) - lambda;
        }
    }
    GainTable {
        alpha,
        lambda,
        delta_max,
        n_states: n,
    }
}

/// CSV export of a solved arm: `delta,state_id,h,alpha,lambda`.
pub fn write_solution_csv<W: Write>(
    w: &mut W,
    sol: &RviSolution,
    gains: &GainTable,
) -> std::io::Result<()> {
    writeln!(w, "delta,state_id,h,alpha,lambda")?;
    for delta in 1..=sol.delta_max {
        for x in 0..sol.n_states {
            writeln!(
                w,
                "{delta},{x},{},{},{}",
                sol.h(delta, x),
                gains.gain(delta, x),
                sol.lambda
            )?;
        }
    }
    Ok(())
}

const ENUMERATION_CAP: usize = 12;

/// Exact optimal average cost by exhaustive enumeration of all stationary
/// deterministic policies, for instances with at most 12 arm states.
///
/// Each policy's chain is evaluated exactly: recurrent classes get their
/// stationary gain from a linear solve, transient states their absorption
/// mix, and the value reported is the expected average cost from the
/// reference state `(1, 0)` — the same state relative value iteration
/// normalizes at. This is the independent oracle for the solver.
pub fn brute_force_average_cost(
    source: &MarkovSource,
    table: &PenaltyTable,
    lambda: f64,
) -> Result<f64> {
    let n = source.n_states();
    let delta_max = table.delta_max();
    check_shapes(source, table);
    let size = n * delta_max;
    if size > ENUMERATION_CAP {
        return Err(Error::InstanceTooLarge {
            size,
            cap: ENUMERATION_CAP,
        });
    }
    let p = source.success_prob();
    source.warm_powers(delta_max);

    let idx = |delta: usize, x: usize| (delta - 1) * n + x;
    let mut best = f64::INFINITY;
    for mask in 0u64..(1 << size) {
        // induced chain and stage cost of this policy
        let mut chain = vec![0.0; size * size];
        let mut cost = vec![0.0; size];
        for delta in 1..=delta_max {
            let kernel = source.power(delta);
            for x in 0..n {
                let s = idx(delta, x);
                let transmit = mask & (1 << s) != 0;
                let aged = idx((delta + 1).min(delta_max), x);
                cost[s] = table.q(delta, x) + if transmit { lambda } else { 0.0 };
                if transmit {
                    chain[s * size + aged] += 1.0 - p;
                    for (x_new, &prob) in kernel.row(x).iter().enumerate() {
                        chain[s * size + idx(1, x_new)] += p * prob;
                    }
                } else {
                    chain[s * size + aged] += 1.0;
                }
            }
        }
        let g = average_cost_from(&chain, &cost, size, 0)?;
        best = best.min(g);
    }
    Ok(best)
}

/// Expected long-run average cost of a fixed chain started at `start`.
fn average_cost_from(chain: &[f64], cost: &[f64], size: usize, start: usize) -> Result<f64> {
    let adj: Vec<Vec<usize>> = (0..size)
        .map(|s| {
            (0..size)
                .filter(|&t| chain[s * size + t] > 0.0)
                .collect()
        })
        .collect();
    let classes = recurrent_classes(&adj);

    let mut class_of = vec![usize::MAX; size];
    for (c, members) in classes.iter().enumerate() {
        for &s in members {
            class_of[s] = c;
        }
    }

    // stationary gain of each recurrent class
    let mut gains = Vec::with_capacity(classes.len());
    for members in &classes {
        let m = members.len();
        // pi (P - I) = 0 restricted to the class, last equation replaced by
        // the normalizer sum(pi) = 1. Unknown vector is pi over `members`.
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m];
        for (col, &j) in members.iter().enumerate() {
            if col == m - 1 {
                for row in 0..m {
                    a[(m - 1) * m + row] = 1.0;
                }
                b[m - 1] = 1.0;
                continue;
            }
            for (row, &i) in members.iter().enumerate() {
                let mut v = chain[i * size + j];
                if i == j {
                    v -= 1.0;
                }
                a[col * m + row] = v;
            }
        }
        let pi = solve_linear(&mut a, &mut b, m).ok_or(Error::NotUnichain {
            count: classes.len(),
        })?;
        let gain: f64 = members
            .iter()
            .zip(&pi)
            .map(|(&s, &w)| w * cost[s])
            .sum();
        gains.push(gain);
    }

    if class_of[start] != usize::MAX {
        return Ok(gains[class_of[start]]);
    }

    // absorption probabilities from the transient part
    let transient: Vec<usize> = (0..size).filter(|&s| class_of[s] == usize::MAX).collect();
    let t_index: Vec<usize> = {
        let mut map = vec![usize::MAX; size];
        for (k, &s) in transient.iter().enumerate() {
            map[s] = k;
        }
        map
    };
    let m = transient.len();
    let mut expected = 0.0;
    for (c, &gain) in gains.iter().enumerate() {
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m];
        for (row, &s) in transient.iter().enumerate() {
            for (col, &t) in transient.iter().enumerate() {
                let mut v = -chain[s * size + t];
                if row == col {
                    v += 1.0;
                }
                a[row * m + col] = v;
            }
            b[row] = (0..size)
                .filter(|&t| class_of[t] == c)
                .map(|t| chain[s * size + t])
                .sum();
        }
        let absorb = solve_linear(&mut a, &mut b, m).ok_or(Error::NotUnichain {
            count: classes.len(),
        })?;
        expected += absorb[t_index[start]] * gain;
    }
    Ok(expected)
}
