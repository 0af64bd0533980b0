//! The situation-unaware penalty: loss matrices over danger levels,
//! estimators, L-entropy and L-conditional entropy, and the `q(delta, x)`
//! table every scheduler consumes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{DangerLevel, MarkovSource};

/// Loss `L(y, a)` of declaring action `a` when the true danger level is `y`.
/// Rows are true levels, columns are actions; by default the action set
/// equals the level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    labels: Vec<DangerLevel>,
    actions: Vec<String>,
    entries: Vec<f64>,
}

impl LossMatrix {
    pub fn new(
        labels: Vec<DangerLevel>,
        actions: Vec<String>,
        entries: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidLoss("level set is empty".into()));
        }
        if actions.is_empty() {
            return Err(Error::InvalidLoss("action set is empty".into()));
        }
        if entries.len() != labels.len() || entries.iter().any(|r| r.len() != actions.len()) {
            return Err(Error::InvalidLoss(format!(
                "loss must be {}x{}",
                labels.len(),
                actions.len()
            )));
        }
        let flat: Vec<f64> = entries.into_iter().flatten().collect();
        if flat.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidLoss(
                "entries must be finite and nonnegative".into(),
            ));
        }
        Ok(LossMatrix {
            labels,
            actions,
            entries: flat,
        })
    }

    /// Square loss with actions named after the levels.
    pub fn square(labels: Vec<DangerLevel>, entries: Vec<Vec<f64>>) -> Result<Self> {
        let actions = labels.iter().map(|l| l.0.clone()).collect();
        LossMatrix::new(labels, actions, entries)
    }

    /// 0-1 loss over the given levels.
    pub fn zero_one(labels: Vec<DangerLevel>) -> Result<Self> {
        let n = labels.len();
        let entries = (0..n)
            .map(|y| (0..n).map(|a| if y == a { 0.0 } else { 1.0 }).collect())
            .collect();
        LossMatrix::square(labels, entries)
    }

    /// The asymmetric three-level safety loss used by the gridworld studies:
    /// misreading danger as safety costs far more than the reverse.
    pub fn default_safety() -> Self {
        LossMatrix::square(
            vec!["safe".into(), "cautious".into(), "dangerous".into()],
            vec![
                vec![0.0, 10.0, 10.0],
                vec![50.0, 0.0, 20.0],
                vec![200.0, 50.0, 0.0],
            ],
        )
        .expect("static loss table is valid")
    }

    pub fn n_levels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn labels(&self) -> &[DangerLevel] {
        &self.labels
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn label_index(&self, label: &DangerLevel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn loss(&self, y: usize, a: usize) -> f64 {
        self.entries[y * self.actions.len() + a]
    }

    /// Expected loss of action `a` under a distribution over levels.
    pub fn expected_loss(&self, dist: &[f64], a: usize) -> f64 {
        dist.iter()
            .enumerate()
            .map(|(y, &p)| p * self.loss(y, a))
            .sum()
    }

    /// An upper bound on any optimal-estimator penalty: min over actions of
    /// the worst-case loss.
    pub fn min_max_loss(&self) -> f64 {
        (0..self.n_actions())
            .map(|a| {
                (0..self.n_levels())
                    .map(|y| self.loss(y, a))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// L-entropy of a distribution over danger levels: the least achievable
/// expected loss, together with the minimizing action (lowest index on ties).
pub fn l_entropy(dist: &[f64], loss: &LossMatrix) -> Result<(f64, usize)> {
    if dist.len() != loss.n_levels() {
        return Err(Error::InvalidDistribution(format!(
            "distribution over {} levels, loss over {}",
            dist.len(),
            loss.n_levels()
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&p| p < -1e-12) {
        return Err(Error::InvalidDistribution(format!(
            "level distribution sums to {sum:.12}"
        )));
    }
    let mut best = (f64::INFINITY, 0usize);
    for a in 0..loss.n_actions() {
        let v = loss.expected_loss(dist, a);
        if v < best.0 {
            best = (v, a);
        }
    }
    Ok(best)
}

/// How an estimator resolves `(delta, x)` into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// The Bayes-optimal estimator: the L-entropy argmin per state.
    Optimal,
    /// A fixed action table, e.g. for evaluating suboptimal estimators.
    Fixed,
}

/// Materialized `(delta, x) -> action` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTable {
    actions: Vec<u32>,
    delta_max: usize,
    n_states: usize,
}

impl ActionTable {
    pub fn new(actions: Vec<u32>, delta_max: usize, n_states: usize) -> Result<Self> {
        if actions.len() != delta_max * n_states {
            return Err(Error::InvalidConfig(format!(
                "action table has {} entries for {} x {}",
                actions.len(),
                delta_max,
                n_states
            )));
        }
        Ok(ActionTable {
            actions,
            delta_max,
            n_states,
        })
    }

    pub fn constant(action: u32, delta_max: usize, n_states: usize) -> Self {
        ActionTable {
            actions: vec![action; delta_max * n_states],
            delta_max,
            n_states,
        }
    }

    pub fn delta_max(&self) -> usize {
        self.delta_max
    }

    pub fn action(&self, delta: usize, x: usize) -> Result<usize> {
        if delta < 1 || delta > self.delta_max {
            return Err(Error::EstimatorGap {
                delta,
                delta_max: self.delta_max,
            });
        }
        Ok(self.actions[(delta - 1) * self.n_states + x] as usize)
    }
}

/// An estimator: either the optimal one (table materialized lazily) or a
/// fixed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    kind: EstimatorKind,
    table: Option<ActionTable>,
}

impl Estimator {
    pub fn optimal() -> Self {
        Estimator {
            kind: EstimatorKind::Optimal,
            table: None,
        }
    }

    pub fn fixed(table: ActionTable) -> Self {
        Estimator {
            kind: EstimatorKind::Fixed,
            table: Some(table),
        }
    }

    /// A fixed estimator that always outputs the same action.
    pub fn fixed_constant(action: u32, delta_max: usize, n_states: usize) -> Self {
        Estimator::fixed(ActionTable::constant(action, delta_max, n_states))
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn table(&self) -> Option<&ActionTable> {
        self.table.as_ref()
    }
}

/// Maps each source state to its row index in the loss matrix.
fn level_map(source: &MarkovSource, loss: &LossMatrix) -> Result<Vec<usize>> {
    let mut by_level = Vec::with_capacity(source.levels().len());
    for level in source.levels() {
        let idx = loss
            .label_index(level)
            .ok_or_else(|| Error::UnknownDangerLevel(level.0.clone()))?;
        by_level.push(idx);
    }
    Ok((0..source.n_states())
        .map(|x| by_level[source.danger_index(x)])
        .collect())
}

/// Pushes a state distribution through the danger map into loss-label space.
fn push_to_levels(probs: &[f64], state_level: &[usize], n_levels: usize) -> Vec<f64> {
    let mut dist = vec![0.0; n_levels];
    for (x, &p) in probs.iter().enumerate() {
        if p != 0.0 {
            dist[state_level[x]] += p;
        }
    }
    dist
}

/// Expected loss of the estimator's output given that the last delivered
/// observation is `x` and is `delta` slots old. For the optimal estimator
/// this equals the L-conditional entropy of the danger level.
pub fn conditional_penalty(
    source: &MarkovSource,
    loss: &LossMatrix,
    estimator: &Estimator,
    delta: usize,
    x: usize,
) -> Result<f64> {
    if delta < 1 {
        return Err(Error::DeltaOutOfRange {
            delta,
            delta_max: usize::MAX,
        });
    }
    let state_level = level_map(source, loss)?;
    let step = source.step_distribution(x, delta)?;
    let dist = push_to_levels(step.probs(), &state_level, loss.n_levels());
    match estimator.kind() {
        EstimatorKind::Optimal => match estimator.table() {
            Some(table) => Ok(loss.expected_loss(&dist, table.action(delta, x)?)),
            None => Ok(l_entropy(&dist, loss)?.0),
        },
        EstimatorKind::Fixed => {
            let table = estimator.table().ok_or(Error::EstimatorGap {
                delta,
                delta_max: 0,
            })?;
            Ok(loss.expected_loss(&dist, table.action(delta, x)?))
        }
    }
}

/// Precomputed penalty grid for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTable {
    q: Vec<f64>,
    action: Vec<u32>,
    delta_max: usize,
    n_states: usize,
    stationary_penalty: f64,
    estimator_kind: EstimatorKind,
}

impl PenaltyTable {
    pub fn delta_max(&self) -> usize {
        self.delta_max
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn stationary_penalty(&self) -> f64 {
        self.stationary_penalty
    }

    pub fn estimator_kind(&self) -> EstimatorKind {
        self.estimator_kind
    }

    /// q(delta, x) for delta in `1..=delta_max`. Panics out of range.
    pub fn q(&self, delta: usize, x: usize) -> f64 {
        debug_assert!(delta >= 1 && delta <= self.delta_max);
        self.q[(delta - 1) * self.n_states + x]
    }

    /// q with the age clamped into the table horizon.
    pub fn q_clamped(&self, delta: usize, x: usize) -> f64 {
        self.q(delta.clamp(1, self.delta_max), x)
    }

    /// The action behind each table cell.
    pub fn action(&self, delta: usize, x: usize) -> usize {
        self.action[(delta - 1) * self.n_states + x] as usize
    }

    /// First `(delta, x)` at which the penalty strictly decreases with age,
    /// i.e. `q(delta+1, x) < q(delta, x) - eps`. Scanned in age-major order.
    pub fn first_age_decrease(&self, eps: f64) -> Option<(usize, usize)> {
        for delta in 1..self.delta_max {
            for x in 0..self.n_states {
                if self.q(delta + 1, x) < self.q(delta, x) - eps {
                    return Some((delta, x));
                }
            }
        }
        None
    }

    /// Largest gap between the deepest row of the table and the stationary
    /// penalty.
    pub fn max_tail_gap(&self) -> f64 {
        (0..self.n_states)
            .map(|x| (self.q(self.delta_max, x) - self.stationary_penalty).abs())
            .fold(0.0, f64::max)
    }

    /// CSV export: `delta,state_id,state_label,q`.
    pub fn write_csv<W: Write>(&self, w: &mut W, source: &MarkovSource) -> std::io::Result<()> {
        writeln!(w, "delta,state_id,state_label,q")?;
        for delta in 1..=self.delta_max {
            for x in 0..self.n_states {
                writeln!(
                    w,
                    "{delta},{x},{},{}",
                    csv_field(&source.state_label(x)),
                    self.q(delta, x)
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn fill_table(
    source: &MarkovSource,
    loss: &LossMatrix,
    estimator: &Estimator,
    delta_max: usize,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let n = source.n_states();
    let state_level = level_map(source, loss)?;
    let mut q = Vec::with_capacity(delta_max * n);
    let mut action = Vec::with_capacity(delta_max * n);
    source.warm_powers(delta_max);
    for delta in 1..=delta_max {
        let kernel = source.power(delta);
        for x in 0..n {
            let dist = push_to_levels(kernel.row(x), &state_level, loss.n_levels());
            let (value, a) = match estimator.kind() {
                EstimatorKind::Optimal => l_entropy(&dist, loss)?,
                EstimatorKind::Fixed => {
                    let table = estimator.table().ok_or(Error::EstimatorGap {
                        delta,
                        delta_max: 0,
                    })?;
                    let a = table.action(delta, x)?;
                    (loss.expected_loss(&dist, a), a)
                }
            };
            q.push(value);
            action.push(a as u32);
        }
    }
    Ok((q, action))
}

/// Builds the penalty grid for all ages `1..=delta_max` and every state, and
/// records the stationary penalty the curve converges to.
pub fn build_penalty_table(
    source: &MarkovSource,
    loss: &LossMatrix,
    estimator: &Estimator,
    delta_max: usize,
) -> Result<PenaltyTable> {
    if delta_max < 1 {
        return Err(Error::DeltaOutOfRange {
            delta: delta_max,
            delta_max: 1,
        });
    }
    let (q, action) = fill_table(source, loss, estimator, delta_max)?;
    let state_level = level_map(source, loss)?;
    // Power iteration handles every aperiodic unichain; fall back to iterate
    // averaging so deterministic cycles (the fixed-path robots) work too.
    let pi = match source.stationary_distribution() {
        Ok(pi) => pi,
        Err(Error::StationaryNotConverged { .. }) => source.stationary_distribution_averaged()?,
        Err(e) => return Err(e),
    };
    let stationary = push_to_levels(pi.probs(), &state_level, loss.n_levels());
    let (stationary_penalty, _) = l_entropy(&stationary, loss)?;
    Ok(PenaltyTable {
        q,
        action,
        delta_max,
        n_states: source.n_states(),
        stationary_penalty,
        estimator_kind: estimator.kind(),
    })
}

/// Materializes the optimal estimator's argmin action per `(delta, x)`.
pub fn optimal_estimator(
    source: &MarkovSource,
    loss: &LossMatrix,
    delta_max: usize,
) -> Result<Estimator> {
    let (_, action) = fill_table(source, loss, &Estimator::optimal(), delta_max)?;
    let table = ActionTable::new(action, delta_max, source.n_states())?;
    Ok(Estimator {
        kind: EstimatorKind::Optimal,
        table: Some(table),
    })
}

/// Smallest age at which every row of the multi-step kernel is within total
/// variation `tol` of the stationary distribution, capped at `cap`.
pub fn choose_delta_max(source: &MarkovSource, tol: f64, cap: usize) -> Result<usize> {
    let pi = source.stationary_distribution()?;
    for delta in 1..=cap {
        let kernel = source.power(delta);
        let max_tv = (0..source.n_states())
            .map(|x| {
                kernel
                    .row(x)
                    .iter()
                    .zip(pi.probs())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 2.0
            })
            .fold(0.0, f64::max);
        if max_tv <= tol {
            return Ok(delta);
        }
    }
    Ok(cap)
}

/// One violation of the more-information inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub delta: usize,
    pub state: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Certificate that the optimal-estimator penalty satisfies
/// `q(delta+1, x) >= sum_x' P^delta(x'|x) q(1, x')` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub checked: usize,
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn is_certified(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the information inequality across the whole table. Only valid for
/// tables built with the optimal estimator; the guarantee does not apply to
/// fixed estimators.
pub fn verify_information_monotonicity(
    table: &PenaltyTable,
    source: &MarkovSource,
) -> Result<MonotonicityReport> {
    if table.estimator_kind != EstimatorKind::Optimal {
        return Err(Error::RequiresOptimalEstimator);
    }
    let n = source.n_states();
    assert_eq!(n, table.n_states, "table and source disagree on state count");
    let q1: Vec<f64> = (0..n).map(|x| table.q(1, x)).collect();
    let mut rhs = vec![0.0; n];
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for delta in 1..table.delta_max {
        source.power(delta).mul_vec(&q1, &mut rhs);
        for (x, &floor) in rhs.iter().enumerate() {
            checked += 1;
            let lhs = table.q(delta + 1, x);
            if lhs < floor - 1e-9 {
                violations.push(MonotonicityViolation {
                    delta,
                    state: x,
                    lhs,
                    rhs: floor,
                });
            }
        }
    }
    Ok(MonotonicityReport { checked, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{
        build_deterministic_robot, build_gridworld, build_two_state_flip, Direction,
        GridworldSpec, StateTag,
    };

    fn grid() -> MarkovSource {
        build_gridworld(&GridworldSpec::default()).unwrap()
    }

    fn gs(source: &MarkovSource, row: u32, col: u32, dir: Direction) -> usize {
        source
            .state_index(&StateTag::Grid { row, col, dir })
            .unwrap()
    }

    #[test]
    fn l_entropy_point_mass_safe_is_zero() {
        let loss = LossMatrix::default_safety();
        let (v, a) = l_entropy(&[1.0, 0.0, 0.0], &loss).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(loss.actions()[a], "safe");
    }

    #[test]
    fn l_entropy_near_boundary_mixture() {
        // 0.025 * L(cautious, safe) = 1.25 beats 0.975 * L(safe, cautious) = 9.75
        let loss = LossMatrix::default_safety();
        let (v, a) = l_entropy(&[0.975, 0.025, 0.0], &loss).unwrap();
        assert!((v - 1.25).abs() < 1e-12);
        assert_eq!(loss.actions()[a], "safe");
    }

    #[test]
    fn l_entropy_stationary_rows_prefers_dangerous() {
        let loss = LossMatrix::default_safety();
        let (v, a) = l_entropy(&[0.625, 0.25, 0.125], &loss).unwrap();
        assert!((v - 11.25).abs() < 1e-12);
        assert_eq!(loss.actions()[a], "dangerous");
    }

    #[test]
    fn l_entropy_breaks_ties_by_lowest_action() {
        let loss = LossMatrix::zero_one(vec!["a".into(), "b".into()]).unwrap();
        let (v, a) = l_entropy(&[0.5, 0.5], &loss).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(a, 0);
    }

    #[test]
    fn gridworld_age_one_penalty_is_zero_everywhere() {
        // The next position is determined by (position, direction), so one
        // step ahead the danger level is certain.
        let g = grid();
        let loss = LossMatrix::default_safety();
        let est = Estimator::optimal();
        for x in 0..g.n_states() {
            let q = conditional_penalty(&g, &loss, &est, 1, x).unwrap();
            assert!(q.abs() < 1e-15, "state {x}: q(1) = {q}");
        }
    }

    #[test]
    fn gridworld_age_two_spot_values() {
        let g = grid();
        let loss = LossMatrix::default_safety();
        let est = Estimator::optimal();
        let near = gs(&g, 2, 3, Direction::Down);
        let q_near = conditional_penalty(&g, &loss, &est, 2, near).unwrap();
        assert!((q_near - 1.25).abs() < 1e-12, "q(2,(2,3)down) = {q_near}");

        let far = gs(&g, 1, 3, Direction::Right);
        let q_far = conditional_penalty(&g, &loss, &est, 2, far).unwrap();
        assert!(q_far.abs() < 1e-15, "q(2,(1,3)right) = {q_far}");
    }

    #[test]
    fn deterministic_robot_table_is_all_zero() {
        let robot = build_deterministic_robot(&[(1, 1), (1, 2), (1, 3)], 0.95).unwrap();
        let loss = LossMatrix::default_safety();
        let table = build_penalty_table(&robot, &loss, &Estimator::optimal(), 16).unwrap();
        for delta in 1..=16 {
            for x in 0..3 {
                assert_eq!(table.q(delta, x), 0.0);
            }
        }
        // A periodic chain defeats plain power iteration, but the averaged
        // fallback is exact here: the stationary penalty must be 0.
        assert_eq!(table.stationary_penalty(), 0.0);
    }

    #[test]
    fn two_state_chain_closed_form() {
        // Y = X with 0-1 loss: q(delta) = (1 - (1-2*rho)^delta) / 2.
        let chain = build_two_state_flip(0.1, 1.0).unwrap();
        let loss = LossMatrix::zero_one(vec!["a".into(), "b".into()]).unwrap();
        let table = build_penalty_table(&chain, &loss, &Estimator::optimal(), 10).unwrap();
        for delta in 1..=10 {
            let expected = (1.0 - 0.8f64.powi(delta as i32)) / 2.0;
            for x in 0..2 {
                assert!(
                    (table.q(delta, x) - expected).abs() < 1e-12,
                    "delta {delta}: {} vs {expected}",
                    table.q(delta, x)
                );
            }
        }
        assert!((table.q(1, 0) - 0.1).abs() < 1e-12);
        assert!((table.q(3, 0) - 0.244).abs() < 1e-12);
    }

    #[test]
    fn optimal_estimator_spot_actions() {
        let g = grid();
        let loss = LossMatrix::default_safety();
        let est = optimal_estimator(&g, &loss, 4).unwrap();
        let table = est.table().unwrap();

        // One step from (4,3) moving down the robot is in row 5 for sure.
        let x = gs(&g, 4, 3, Direction::Down);
        assert_eq!(loss.actions()[table.action(1, x).unwrap()], "dangerous");

        let x = gs(&g, 2, 3, Direction::Down);
        assert_eq!(loss.actions()[table.action(2, x).unwrap()], "safe");
    }

    #[test]
    fn optimal_estimator_matches_stationary_argmin_at_depth() {
        let g = grid();
        let loss = LossMatrix::default_safety();
        let delta_max = 100;
        let est = optimal_estimator(&g, &loss, delta_max).unwrap();
        let table = est.table().unwrap();
        let pi = g.stationary_distribution().unwrap();
        let state_level = level_map(&g, &loss).unwrap();
        let stationary = push_to_levels(pi.probs(), &state_level, loss.n_levels());
        let (_, stationary_argmin) = l_entropy(&stationary, &loss).unwrap();
        for x in 0..g.n_states() {
            assert_eq!(
                table.action(delta_max, x).unwrap(),
                stationary_argmin,
                "state {x}"
            );
        }
    }

    #[test]
    fn optimal_penalty_lower_bounds_every_fixed_action() {
        let g = grid();
        let loss = LossMatrix::default_safety();
        let table = build_penalty_table(&g, &loss, &Estimator::optimal(), 12).unwrap();
        for a in 0..loss.n_actions() {
            let fixed = Estimator::fixed_constant(a as u32, 12, g.n_states());
            for delta in [1usize, 3, 7, 12] {
                for x in (0..g.n_states()).step_by(17) {
                    let fixed_q = conditional_penalty(&g, &loss, &fixed, delta, x).unwrap();
                    assert!(
                        table.q(delta, x) <= fixed_q + 1e-12,
                        "action {a}, delta {delta}, state {x}"
                    );
                }
            }
        }
    }

    #[test]
    fn fixed_estimator_errors_beyond_its_horizon() {
        let g = grid();
        let loss = LossMatrix::default_safety();
        let fixed = Estimator::fixed_constant(0, 3, g.n_states());
        match conditional_penalty(&g, &loss, &fixed, 4, 0) {
            Err(Error::EstimatorGap { delta: 4, .. }) => {}
            other => panic!("expected estimator gap, got {other:?}"),
        }
    }

    #[test]
    fn monotonicity_certificate_on_small_sources() {
        let chain = build_two_state_flip(0.1, 1.0).unwrap();
        let loss = LossMatrix::zero_one(vec!["a".into(), "b".into()]).unwrap();
        let table = build_penalty_table(&chain, &loss, &Estimator::optimal(), 30).unwrap();
        let report = verify_information_monotonicity(&table, &chain).unwrap();
        assert!(report.is_certified(), "{:?}", report.violations);
        assert_eq!(report.checked, 29 * 2);
    }

    #[test]
    fn monotonicity_refuses_fixed_estimators() {
        let chain = build_two_state_flip(0.1, 1.0).unwrap();
        let loss = LossMatrix::zero_one(vec!["a".into(), "b".into()]).unwrap();
        let fixed = Estimator::fixed_constant(0, 10, 2);
        let table = build_penalty_table(&chain, &loss, &fixed, 10).unwrap();
        match verify_information_monotonicity(&table, &chain) {
            Err(Error::RequiresOptimalEstimator) => {}
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn penalty_is_bounded_by_the_minimax_loss() {
        let g = grid();
        let loss = LossMatrix::default_safety();
        let table = build_penalty_table(&g, &loss, &Estimator::optimal(), 40).unwrap();
        let cap = loss.min_max_loss();
        assert_eq!(cap, 20.0); // worst case of always declaring dangerous
        for delta in 1..=40 {
            for x in 0..g.n_states() {
                let q = table.q(delta, x);
                assert!(q >= 0.0, "negative penalty at ({delta}, {x})");
                assert!(q <= cap + 1e-12, "q({delta},{x}) = {q} above {cap}");
            }
        }
    }

    #[test]
    fn tail_gap_small_at_mixing_rule_depth() {
        let chain = build_two_state_flip(0.2, 1.0).unwrap();
        let loss = LossMatrix::zero_one(vec!["a".into(), "b".into()]).unwrap();
        let delta_max = choose_delta_max(&chain, 1e-3, 500).unwrap();
        let table = build_penalty_table(&chain, &loss, &Estimator::optimal(), delta_max).unwrap();
        assert!(table.max_tail_gap() <= 0.05, "gap {}", table.max_tail_gap());
    }

    #[test]
    fn unknown_danger_label_is_rejected() {
        let chain = crate::markov::build_explicit(
            "odd-levels",
            vec!["s".into(), "t".into()],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec!["odd".into(), "odd".into()],
            1.0,
        )
        .unwrap();
        let loss = LossMatrix::default_safety();
        match conditional_penalty(&chain, &loss, &Estimator::optimal(), 1, 0) {
            Err(Error::UnknownDangerLevel(level)) => assert_eq!(level, "odd"),
            other => panic!("expected unknown level, got {other:?}"),
        }
    }
}
