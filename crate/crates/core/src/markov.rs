//! Finite-state Markov sources: the gridworld scanners, deterministic-path
//! robots, and explicit chains, together with cached multi-step transition
//! kernels, stationary distributions, and seeded sampling.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{recurrent_classes, Square};

/// One element of the finite danger alphabet Y, e.g. `safe` or `dangerous`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DangerLevel(pub String);

impl DangerLevel {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DangerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DangerLevel {
    fn from(s: &str) -> Self {
        DangerLevel(s.to_owned())
    }
}

/// The default three-level danger alphabet.
pub fn default_levels() -> Vec<DangerLevel> {
    vec!["safe".into(), "cautious".into(), "dangerous".into()]
}

/// Moving direction of a gridworld robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn is_vertical(self) -> bool {
        matches!(self, Direction::Up | Direction::Down)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an observable state is, beyond its index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StateTag {
    /// Gridworld state: 1-based position plus the direction about to be taken.
    Grid { row: u32, col: u32, dir: Direction },
    /// Index along a deterministic cyclic path.
    PathIndex(usize),
    /// Opaque named state of an explicit chain.
    Named(String),
}

impl fmt::Display for StateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateTag::Grid { row, col, dir } => write!(f, "({row},{col}),{dir}"),
            StateTag::PathIndex(i) => write!(f, "#{i}"),
            StateTag::Named(name) => f.write_str(name),
        }
    }
}

/// A probability vector over the states of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution(Vec<f64>);

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < -1e-15 || !p.is_finite()) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum:.15}, not 1"
            )));
        }
        Ok(StateDistribution(probs))
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[x] = 1.0;
        StateDistribution(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, x: usize) -> f64 {
        self.0[x]
    }
}

/// Parameters of the gridworld scanner robots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridworldSpec {
    #[serde(default = "GridworldSpec::default_rows")]
    pub rows: u32,
    #[serde(default = "GridworldSpec::default_cols")]
    pub cols: u32,
    #[serde(default = "GridworldSpec::default_vertical_prob")]
    pub vertical_prob: f64,
    #[serde(default = "GridworldSpec::default_horizontal_prob")]
    pub horizontal_prob: f64,
    /// Danger level per row, top row first.
    #[serde(default = "GridworldSpec::default_row_danger")]
    pub row_danger: Vec<DangerLevel>,
    #[serde(default = "GridworldSpec::default_success_prob")]
    pub success_prob: f64,
}

impl GridworldSpec {
    fn default_rows() -> u32 {
        5
    }
    fn default_cols() -> u32 {
        12
    }
    fn default_vertical_prob() -> f64 {
        0.05
    }
    fn default_horizontal_prob() -> f64 {
        0.95
    }
    fn default_row_danger() -> Vec<DangerLevel> {
        vec![
            "safe".into(),
            "safe".into(),
            "safe".into(),
            "cautious".into(),
            "dangerous".into(),
        ]
    }
    fn default_success_prob() -> f64 {
        0.95
    }

    fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 1 {
            return Err(Error::InvalidSource(format!(
                "grid must have at least 2 rows and 1 column, got {}x{}",
                self.rows, self.cols
            )));
        }
        for (name, p) in [
            ("vertical_prob", self.vertical_prob),
            ("horizontal_prob", self.horizontal_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSource(format!("{name} {p} outside [0,1]")));
            }
        }
        if (self.vertical_prob + self.horizontal_prob - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSource(format!(
                "vertical_prob + horizontal_prob must be 1, got {}",
                self.vertical_prob + self.horizontal_prob
            )));
        }
        if self.row_danger.len() != self.rows as usize {
            return Err(Error::InvalidSource(format!(
                "row_danger has {} entries for {} rows",
                self.row_danger.len(),
                self.rows
            )));
        }
        Ok(())
    }
}

impl Default for GridworldSpec {
    fn default() -> Self {
        GridworldSpec {
            rows: Self::default_rows(),
            cols: Self::default_cols(),
            vertical_prob: Self::default_vertical_prob(),
            horizontal_prob: Self::default_horizontal_prob(),
            row_danger: Self::default_row_danger(),
            success_prob: Self::default_success_prob(),
        }
    }
}

/// A finite-state Markov signal source with a danger-level map and a
/// per-transmission channel success probability. Immutable after
/// construction; the multi-step kernel cache grows behind a mutex and is
/// safe to share across readers.
pub struct MarkovSource {
    name: String,
    tags: Vec<StateTag>,
    lookup: HashMap<StateTag, usize>,
    levels: Vec<DangerLevel>,
    danger: Vec<usize>,
    transition: Square,
    /// Per-row cumulative sums of `transition`, for O(log n) sampling.
    cumulative: Vec<f64>,
    success_prob: f64,
    powers: Mutex<Vec<Arc<Square>>>,
}

impl fmt::Debug for MarkovSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkovSource")
            .field("name", &self.name)
            .field("states", &self.tags.len())
            .field("levels", &self.levels)
            .field("success_prob", &self.success_prob)
            .finish()
    }
}

impl MarkovSource {
    /// Builds a source from explicit parts, validating every invariant.
    pub fn from_parts(
        name: impl Into<String>,
        tags: Vec<StateTag>,
        levels: Vec<DangerLevel>,
        danger: Vec<usize>,
        rows: Vec<Vec<f64>>,
        success_prob: f64,
    ) -> Result<Self> {
        let n = tags.len();
        if n == 0 {
            return Err(Error::InvalidSource("source has no states".into()));
        }
        if levels.is_empty() {
            return Err(Error::InvalidSource("danger alphabet is empty".into()));
        }
        {
            let mut seen = levels.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != levels.len() {
                return Err(Error::InvalidSource("danger labels are not distinct".into()));
            }
        }
        if danger.len() != n {
            return Err(Error::InvalidSource(format!(
                "danger map covers {} of {} states",
                danger.len(),
                n
            )));
        }
        if let Some(&bad) = danger.iter().find(|&&d| d >= levels.len()) {
            return Err(Error::InvalidSource(format!(
                "danger index {bad} outside the {}-level alphabet",
                levels.len()
            )));
        }
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSource(format!(
                "transition matrix must be {n}x{n}"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidSource(format!(
                    "row {i} has an entry outside [0,1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::NotStochastic { row: i, sum });
            }
        }
        if !(success_prob > 0.0 && success_prob <= 1.0) {
            return Err(Error::InvalidSource(format!(
                "success probability {success_prob} outside (0,1]"
            )));
        }

        let mut cumulative = Vec::with_capacity(n * n);
        for row in &rows {
            let mut acc = 0.0;
            for &p in row {
                acc += p;
                cumulative.push(acc);
            }
        }
        let lookup = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let transition = Square::from_rows(rows);
        Ok(MarkovSource {
            name: name.into(),
            tags,
            lookup,
            levels,
            danger,
            transition,
            cumulative,
            success_prob,
            powers: Mutex::new(vec![Arc::new(Square::identity(n))]),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.tags.len()
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    /// The danger alphabet Y of this source.
    pub fn levels(&self) -> &[DangerLevel] {
        &self.levels
    }

    /// Index into `levels()` for state `x`.
    pub fn danger_index(&self, x: usize) -> usize {
        self.danger[x]
    }

    pub fn danger_of(&self, x: usize) -> &DangerLevel {
        &self.levels[self.danger[x]]
    }

    pub fn state_tag(&self, x: usize) -> &StateTag {
        &self.tags[x]
    }

    pub fn state_label(&self, x: usize) -> String {
        self.tags[x].to_string()
    }

    pub fn state_index(&self, tag: &StateTag) -> Option<usize> {
        self.lookup.get(tag).copied()
    }

    /// Resolves a textual state descriptor: a gridworld `(row,col),dir`
    /// string, a `#index` path descriptor, a bare index, or an exact label.
    pub fn parse_state(&self, descriptor: &str) -> Result<usize> {
        let s = descriptor.trim();
        if let Some(tag) = parse_grid_descriptor(s) {
            if let Some(i) = self.state_index(&tag) {
                return Ok(i);
            }
        }
        if let Some(rest) = s.strip_prefix('#') {
            if let Ok(i) = rest.parse::<usize>() {
                if i < self.n_states() {
                    return Ok(i);
                }
            }
        }
        if let Some(i) = self.state_index(&StateTag::Named(s.to_owned())) {
            return Ok(i);
        }
        if let Ok(i) = s.parse::<usize>() {
            if i < self.n_states() {
                return Ok(i);
            }
        }
        Err(Error::UnknownState(descriptor.to_owned()))
    }

    pub(crate) fn transition(&self) -> &Square {
        &self.transition
    }

    pub fn transition_row(&self, x: usize) -> &[f64] {
        self.transition.row(x)
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.n_states() {
            return Err(Error::StateIndex {
                index: x,
                count: self.n_states(),
            });
        }
        Ok(())
    }

    /// The `steps`-step transition kernel, memoized densely.
    pub(crate) fn power(&self, steps: usize) -> Arc<Square> {
        let mut cache = self.powers.lock().expect("power cache poisoned");
        while cache.len() <= steps {
            let next = cache.last().unwrap().matmul(&self.transition);
            cache.push(Arc::new(next));
        }
        Arc::clone(&cache[steps])
    }

    /// Precomputes kernels up to `steps` so later queries are lookups.
    pub fn warm_powers(&self, steps: usize) {
        let _ = self.power(steps);
    }

    /// Distribution of the state `steps` slots after observing `x`.
    pub fn step_distribution(&self, x: usize, steps: usize) -> Result<StateDistribution> {
        self.check_state(x)?;
        let p = self.power(steps);
        Ok(StateDistribution(p.row(x).to_vec()))
    }

    /// Unique stationary distribution by power iteration to residual 1e-12.
    ///
    /// Verifies first that the chain has a single recurrent class. Periodic
    /// chains fail with `StationaryNotConverged`; see
    /// [`MarkovSource::stationary_distribution_averaged`] for those.
    pub fn stationary_distribution(&self) -> Result<StateDistribution> {
        self.stationary_impl(false)
    }

    /// Stationary distribution via iterate averaging (power iteration on the
    /// half-lazy chain (P+I)/2), which also converges for periodic chains.
    pub fn stationary_distribution_averaged(&self) -> Result<StateDistribution> {
        self.stationary_impl(true)
    }

    fn stationary_impl(&self, averaged: bool) -> Result<StateDistribution> {
        let n = self.n_states();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                self.transition
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let closed = recurrent_classes(&adj);
        if closed.len() != 1 {
            return Err(Error::NotUnichain { count: closed.len() });
        }

        let max_iter = 100_000usize;
        let required = 1e-12;
        // Iterate down to the floating-point floor; the contract only needs
        // 1e-12, but downstream penalty aggregates benefit from the margin.
        let target = 2e-15;
        // Point-mass start: makes periodicity visible instead of being masked
        // by a symmetric initial vector.
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        let mut next = vec![0.0; n];
        let mut check = vec![0.0; n];
        let mut best_residual = f64::INFINITY;
        let mut stalled_checks = 0u32;
        let mut it = 0usize;
        while it < max_iter {
            self.transition.vec_mul(&v, &mut next);
            if averaged {
                for (nx, &old) in next.iter_mut().zip(v.iter()) {
                    *nx = 0.5 * (*nx + old);
                }
            }
            it += 1;
            // residual against the original chain
            if it.is_multiple_of(16) || it == max_iter {
                self.transition.vec_mul(&next, &mut check);
                let residual = next
                    .iter()
                    .zip(&check)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if residual < best_residual * 0.99 {
                    best_residual = residual;
                    stalled_checks = 0;
                } else {
                    stalled_checks += 1;
                }
                let done = residual <= target || stalled_checks >= 4 || it == max_iter;
                if done {
                    if residual <= required {
                        let sum: f64 = next.iter().sum();
                        let probs = next.iter().map(|p| p / sum).collect();
                        return Ok(StateDistribution(probs));
                    }
                    return Err(Error::StationaryNotConverged {
                        iterations: it,
                        residual,
                    });
                }
            }
            std::mem::swap(&mut v, &mut next);
        }
        unreachable!("iteration loop always returns");
    }

    /// Draws the next state from the transition row of `x`.
    pub fn sample_step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let n = self.n_states();
        let u: f64 = rand::RngExt::random(rng);
        let row = &self.cumulative[x * n..(x + 1) * n];
        row.partition_point(|&c| c <= u).min(n - 1)
    }
}

fn parse_grid_descriptor(s: &str) -> Option<StateTag> {
    // Accepts "(row,col),dir" with optional spaces, e.g. "(2,3),down".
    let s = s.trim().trim_start_matches('(');
    let (pos, dir) = s.rsplit_once(',')?;
    let dir = Direction::parse(dir)?;
    let pos = pos.trim().trim_end_matches(')').trim_start_matches('(');
    let (row, col) = pos.split_once(',')?;
    let row: u32 = row.trim().trim_end_matches(')').parse().ok()?;
    let col: u32 = col.trim().trim_end_matches(')').parse().ok()?;
    Some(StateTag::Grid { row, col, dir })
}

fn grid_directions(rows: u32, row: u32) -> Vec<Direction> {
    Direction::ALL
        .into_iter()
        .filter(|d| match d {
            Direction::Up => row > 1,
            Direction::Down => row < rows,
            Direction::Left | Direction::Right => true,
        })
        .collect()
}

fn grid_move(spec: &GridworldSpec, row: u32, col: u32, dir: Direction) -> (u32, u32) {
    match dir {
        Direction::Up => (row - 1, col),
        Direction::Down => (row + 1, col),
        Direction::Left => (row, col.max(2) - 1),
        Direction::Right => (row, (col + 1).min(spec.cols)),
    }
}

/// Resample mass of direction `dir` at a position in row `row`: the total
/// vertical mass is split over the available vertical moves, the horizontal
/// mass equally over left and right.
fn direction_mass(spec: &GridworldSpec, row: u32, dir: Direction) -> f64 {
    if dir.is_vertical() {
        let vertical_count = grid_directions(spec.rows, row)
            .iter()
            .filter(|d| d.is_vertical())
            .count();
        spec.vertical_prob / vertical_count as f64
    } else {
        spec.horizontal_prob / 2.0
    }
}

/// Builds the gridworld scanner source: states are (position, direction)
/// pairs, the position move encoded by the direction is applied
/// deterministically, and the direction is resampled at the new position.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<MarkovSource> {
    spec.validate()?;

    let mut tags = Vec::new();
    for row in 1..=spec.rows {
        for col in 1..=spec.cols {
            let dirs = grid_directions(spec.rows, row);
            if dirs.is_empty() {
                return Err(Error::InvalidSource(format!(
                    "position ({row},{col}) has no available direction"
                )));
            }
            for dir in dirs {
                tags.push(StateTag::Grid { row, col, dir });
            }
        }
    }
    let n = tags.len();
    let index: HashMap<StateTag, usize> = tags
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();

    let mut rows_mat = vec![vec![0.0; n]; n];
    for (i, tag) in tags.iter().enumerate() {
        let StateTag::Grid { row, col, dir } = *tag else {
            unreachable!()
        };
        let (nr, nc) = grid_move(spec, row, col, dir);
        for nd in grid_directions(spec.rows, nr) {
            let j = index[&StateTag::Grid {
                row: nr,
                col: nc,
                dir: nd,
            }];
            rows_mat[i][j] += direction_mass(spec, nr, nd);
        }
    }

    // Y = the distinct labels of row_danger, in order of first appearance.
    let mut levels: Vec<DangerLevel> = Vec::new();
    for label in &spec.row_danger {
        if !levels.contains(label) {
            levels.push(label.clone());
        }
    }
    let danger: Vec<usize> = tags
        .iter()
        .map(|t| {
            let StateTag::Grid { row, .. } = t else {
                unreachable!()
            };
            let label = &spec.row_danger[(*row - 1) as usize];
            levels.iter().position(|l| l == label).unwrap()
        })
        .collect();

    MarkovSource::from_parts(
        format!("gridworld-{}x{}", spec.rows, spec.cols),
        tags,
        levels,
        danger,
        rows_mat,
        spec.success_prob,
    )
}

/// Builds a robot that follows a fixed cyclic path. Its state is the path
/// index, the transition matrix is the cyclic shift, and every state is safe.
pub fn build_deterministic_robot(path: &[(u32, u32)], success_prob: f64) -> Result<MarkovSource> {
    if path.is_empty() {
        return Err(Error::InvalidSource("path is empty".into()));
    }
    let n = path.len();
    let tags: Vec<StateTag> = (0..n).map(StateTag::PathIndex).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        rows[i][(i + 1) % n] = 1.0;
    }
    MarkovSource::from_parts(
        format!("deterministic-{n}"),
        tags,
        vec!["safe".into()],
        vec![0; n],
        rows,
        success_prob,
    )
}

/// Builds a source from an explicit matrix plus per-state danger labels.
pub fn build_explicit(
    name: impl Into<String>,
    states: Vec<String>,
    matrix: Vec<Vec<f64>>,
    danger_labels: Vec<DangerLevel>,
    success_prob: f64,
) -> Result<MarkovSource> {
    if danger_labels.len() != states.len() {
        return Err(Error::InvalidSource(format!(
            "danger list covers {} of {} states",
            danger_labels.len(),
            states.len()
        )));
    }
    let mut levels: Vec<DangerLevel> = Vec::new();
    for label in &danger_labels {
        if !levels.contains(label) {
            levels.push(label.clone());
        }
    }
    let danger = danger_labels
        .iter()
        .map(|l| levels.iter().position(|x| x == l).unwrap())
        .collect();
    let tags = states.into_iter().map(StateTag::Named).collect();
    MarkovSource::from_parts(name, tags, levels, danger, matrix, success_prob)
}

/// A two-state chain that flips with probability `rho`, with Y = X.
/// Used throughout the tests and by the closed-form oracles.
pub fn build_two_state_flip(rho: f64, success_prob: f64) -> Result<MarkovSource> {
    build_explicit(
        format!("flip-{rho}"),
        vec!["a".into(), "b".into()],
        vec![vec![1.0 - rho, rho], vec![rho, 1.0 - rho]],
        vec!["a".into(), "b".into()],
        success_prob,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn default_grid() -> MarkovSource {
        build_gridworld(&GridworldSpec::default()).unwrap()
    }

    fn grid_state(source: &MarkovSource, row: u32, col: u32, dir: Direction) -> usize {
        source
            .state_index(&StateTag::Grid { row, col, dir })
            .expect("state exists")
    }

    #[test]
    fn default_gridworld_has_216_states() {
        // 36 in row 1 and row 5 (3 directions), 48 in each of rows 2-4.
        let g = default_grid();
        assert_eq!(g.n_states(), 216);
        let row1 = (0..216)
            .filter(|&i| matches!(g.state_tag(i), StateTag::Grid { row: 1, .. }))
            .count();
        let row3 = (0..216)
            .filter(|&i| matches!(g.state_tag(i), StateTag::Grid { row: 3, .. }))
            .count();
        assert_eq!(row1, 36);
        assert_eq!(row3, 48);
    }

    #[test]
    fn gridworld_danger_by_row() {
        let g = default_grid();
        for i in 0..g.n_states() {
            let StateTag::Grid { row, .. } = *g.state_tag(i) else {
                unreachable!()
            };
            let expected = match row {
                1..=3 => "safe",
                4 => "cautious",
                _ => "dangerous",
            };
            assert_eq!(g.danger_of(i).as_str(), expected, "state {i}");
        }
    }

    #[test]
    fn gridworld_one_step_from_2_3_down() {
        let g = default_grid();
        let x = grid_state(&g, 2, 3, Direction::Down);
        let row = g.transition_row(x);
        let mut support: Vec<(StateTag, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| (g.state_tag(j).clone(), p))
            .collect();
        support.sort_by(|a, b| format!("{}", a.0).cmp(&format!("{}", b.0)));
        assert_eq!(support.len(), 4);
        for (tag, p) in &support {
            let StateTag::Grid { row, col, dir } = tag else {
                unreachable!()
            };
            assert_eq!((*row, *col), (3, 3));
            let expected = if dir.is_vertical() { 0.025 } else { 0.475 };
            assert!((p - expected).abs() < 1e-15, "{tag}: {p}");
        }
    }

    #[test]
    fn gridworld_boundary_rows_keep_full_vertical_mass() {
        let g = default_grid();
        // From (2,5),up the robot lands in row 1; the single vertical move
        // (down) carries the whole 0.05.
        let x = grid_state(&g, 2, 5, Direction::Up);
        let down = grid_state(&g, 1, 5, Direction::Down);
        assert!((g.transition_row(x)[down] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn gridworld_horizontal_moves_stick_at_the_edge() {
        let g = default_grid();
        let x = grid_state(&g, 3, 1, Direction::Left);
        // Stays at (3,1); some resampled direction keeps it there.
        let total_at_col1: f64 = g
            .transition_row(x)
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                matches!(g.state_tag(*j), StateTag::Grid { row: 3, col: 1, .. })
            })
            .map(|(_, &p)| p)
            .sum();
        assert!((total_at_col1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_robot_matrices() {
        let one = build_deterministic_robot(&[(1, 1)], 0.95).unwrap();
        assert_eq!(one.transition_row(0), &[1.0]);

        let four = build_deterministic_robot(&[(1, 1), (1, 2), (1, 3), (1, 4)], 0.95).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if j == (i + 1) % 4 { 1.0 } else { 0.0 };
                assert_eq!(four.transition_row(i)[j], expected);
            }
        }
        assert_eq!(four.danger_of(2).as_str(), "safe");
    }

    #[test]
    fn step_distribution_zero_steps_is_point_mass() {
        let g = default_grid();
        let d = g.step_distribution(7, 0).unwrap();
        assert_eq!(d.prob(7), 1.0);
        assert_eq!(d.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_state_flip_two_steps() {
        // closed form: P(stay) = (1+(1-2rho)^k)/2
        let c = build_two_state_flip(0.1, 1.0).unwrap();
        let d = c.step_distribution(0, 2).unwrap();
        assert!((d.prob(0) - 0.82).abs() < 1e-15);
        assert!((d.prob(1) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn stationary_symmetric_two_state() {
        let c = build_two_state_flip(0.3, 1.0).unwrap();
        let pi = c.stationary_distribution().unwrap();
        assert!((pi.prob(0) - 0.5).abs() < 1e-12);
        assert!((pi.prob(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_gridworld_row_marginal() {
        // Detailed balance on the row chain gives (1/8, 1/4, 1/4, 1/4, 1/8).
        let g = default_grid();
        let pi = g.stationary_distribution().unwrap();
        let mut rows = [0.0; 5];
        for (i, p) in pi.probs().iter().enumerate() {
            let StateTag::Grid { row, .. } = *g.state_tag(i) else {
                unreachable!()
            };
            rows[(row - 1) as usize] += p;
        }
        let expected = [0.125, 0.25, 0.25, 0.25, 0.125];
        for (r, (got, want)) in rows.iter().zip(expected).enumerate() {
            assert!((got - want).abs() < 1e-9, "row {}: {got} vs {want}", r + 1);
        }
    }

    #[test]
    fn stationary_rejects_reducible_chains() {
        let split = build_explicit(
            "two-islands",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec!["safe".into(), "safe".into()],
            1.0,
        )
        .unwrap();
        match split.stationary_distribution() {
            Err(Error::NotUnichain { count: 2 }) => {}
            other => panic!("expected two recurrent classes, got {other:?}"),
        }
    }

    #[test]
    fn stationary_periodic_cycle_errors_but_averaged_is_uniform() {
        let cycle = build_deterministic_robot(&[(1, 1), (1, 2), (1, 3), (1, 4)], 1.0).unwrap();
        match cycle.stationary_distribution() {
            Err(Error::StationaryNotConverged { .. }) => {}
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let pi = cycle.stationary_distribution_averaged().unwrap();
        for x in 0..4 {
            assert!((pi.prob(x) - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_step_deterministic_and_seed_stable() {
        let robot = build_deterministic_robot(&[(1, 1), (1, 2), (1, 3)], 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for x in 0..3 {
            assert_eq!(robot.sample_step(x, &mut rng), (x + 1) % 3);
        }

        let chain = build_two_state_flip(0.1, 1.0).unwrap();
        let draw = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..32).map(|_| chain.sample_step(0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn sample_step_flip_frequency_matches_rho() {
        let chain = build_two_state_flip(0.1, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 1_000_000u32;
        let flips = (0..n)
            .filter(|_| chain.sample_step(0, &mut rng) == 1)
            .count() as f64;
        let freq = flips / n as f64;
        assert!((freq - 0.1).abs() < 0.001, "flip frequency {freq}");
    }

    #[test]
    fn gridworld_sample_frequencies_match_kernel() {
        let g = default_grid();
        let x = grid_state(&g, 2, 3, Direction::Down);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 200_000;
        let mut counts = vec![0u32; g.n_states()];
        for _ in 0..n {
            counts[g.sample_step(x, &mut rng)] += 1;
        }
        let expected = g.step_distribution(x, 1).unwrap();
        for (j, &c) in counts.iter().enumerate() {
            let p = expected.prob(j);
            if p == 0.0 {
                assert_eq!(c, 0, "state {j} should be unreachable");
                continue;
            }
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-9,
                "state {j}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn parse_state_descriptors() {
        let g = default_grid();
        let x = g.parse_state("(2,3),down").unwrap();
        assert_eq!(
            g.state_tag(x),
            &StateTag::Grid { row: 2, col: 3, dir: Direction::Down }
        );
        assert!(g.parse_state("(9,9),down").is_err());

        let robot = build_deterministic_robot(&[(1, 1), (1, 2)], 1.0).unwrap();
        assert_eq!(robot.parse_state("#1").unwrap(), 1);
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = GridworldSpec {
            vertical_prob: 0.2,
            ..GridworldSpec::default()
        };
        assert!(build_gridworld(&spec).is_err());

        let bad = MarkovSource::from_parts(
            "bad",
            vec![StateTag::Named("a".into()), StateTag::Named("b".into())],
            vec!["safe".into()],
            vec![0, 0],
            vec![vec![0.5, 0.4], vec![0.0, 1.0]],
            1.0,
        );
        assert!(matches!(bad, Err(Error::NotStochastic { row: 0, .. })));

        assert!(build_deterministic_robot(&[], 1.0).is_err());
        assert!(build_two_state_flip(0.1, 0.0).is_err());
    }
}
