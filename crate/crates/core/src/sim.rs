//! Discrete-time fleet simulation: source evolution, scheduling, Bernoulli
//! erasure channels, and penalty accounting with seeded replications.
//!
//! Slot order: every source advances one hidden step; the policy decides
//! from the observable per-arm states (age, last delivered observation);
//! scheduled transmissions succeed independently with the arm's channel
//! probability, resetting the age and delivering the observation one slot
//! later; the slot penalty is then accrued at the updated state. The
//! scheduler never sees the hidden state, only what was delivered.

use std::io::Write;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::arm::{ArmState, GainTable};
use crate::error::{Error, Result};
use crate::markov::MarkovSource;
use crate::penalty::PenaltyTable;
use crate::policy::{
    maxage_select, netgain_select, periodic_step, randomized_select, FifoQueue,
    SchedulingDecision,
};

/// One arm of the simulated fleet.
#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub source: Arc<MarkovSource>,
    pub penalty: Arc<PenaltyTable>,
    /// Gain table at the solved price; required by the net-gain policy.
    pub gains: Option<Arc<GainTable>>,
    /// Hidden source state at slot 0, also the initially delivered
    /// observation.
    pub start_state: usize,
}

/// Which scheduler drives the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Netgain,
    Randomized,
    Periodic { buffer: usize },
    MaxAge,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Netgain => "netgain",
            PolicyKind::Randomized => "randomized",
            PolicyKind::Periodic { .. } => "periodic",
            PolicyKind::MaxAge => "maxage",
        }
    }
}

/// A fleet simulation setup. `warmup` slots are excluded from averages.
#[derive(Debug, Clone)]
pub struct FleetConfig {
    pub arms: Vec<ArmSpec>,
    pub channels: usize,
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub policy: PolicyKind,
    pub record_aoi: bool,
    pub record_decisions: bool,
}

impl FleetConfig {
    fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig("fleet has no arms".into()));
        }
        if self.channels == 0 {
            return Err(Error::InvalidConfig("need at least one channel".into()));
        }
        if self.horizon <= self.warmup {
            return Err(Error::BadHorizon {
                horizon: self.horizon,
                warmup: self.warmup,
            });
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if arm.start_state >= arm.source.n_states() {
                return Err(Error::StateIndex {
                    index: arm.start_state,
                    count: arm.source.n_states(),
                });
            }
            if self.policy == PolicyKind::Netgain && arm.gains.is_none() {
                return Err(Error::MissingGains);
            }
            if let Some(gains) = &arm.gains {
                if gains.n_states() != arm.source.n_states() {
                    return Err(Error::InvalidConfig(format!(
                        "arm {i}: gain table covers {} states, source has {}",
                        gains.n_states(),
                        arm.source.n_states()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Aggregated metrics of one run.
#[derive(Debug, Clone)]
pub struct SimMetrics {
    /// Post-warmup penalty sum per arm.
    pub per_arm_penalty_sum: Vec<f64>,
    /// Total penalty per slot per arm: `sum / ((horizon - warmup) * N)`.
    pub normalized_avg_penalty: f64,
    pub success_counts: Vec<u64>,
    pub attempt_counts: Vec<u64>,
    /// Age each arm's policy saw at the start of every slot.
    pub aoi_trace: Option<Vec<Vec<u64>>>,
    pub decisions: Option<Vec<SchedulingDecision>>,
    pub horizon: u64,
    pub warmup: u64,
}

/// Runs one seeded simulation.
pub fn simulate(config: &FleetConfig) -> Result<SimMetrics> {
    config.validate()?;
    let n = config.arms.len();
    let m = config.channels;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    let mut hidden: Vec<usize> = config.arms.iter().map(|a| a.start_state).collect();
    let mut states: Vec<ArmState> = config
        .arms
        .iter()
        .map(|a| ArmState::new(1, a.start_state))
        .collect();

    let netgain_tables: Option<Vec<&GainTable>> = match config.policy {
        PolicyKind::Netgain => Some(
            config
                .arms
                .iter()
                .map(|a| a.gains.as_deref().expect("validated above"))
                .collect(),
        ),
        _ => None,
    };

    // periodic updating needs the recent hidden history to date deliveries
    let (mut queue, mut history) = match config.policy {
        PolicyKind::Periodic { buffer } => {
            let depth = buffer + 8;
            (
                Some(FifoQueue::new(buffer)),
                vec![vec![0usize; depth]; n],
            )
        }
        _ => (None, Vec::new()),
    };

    let mut penalty_sum = vec![0.0; n];
    let mut successes = vec![0u64; n];
    let mut attempts = vec![0u64; n];
    let mut aoi_trace = config
        .record_aoi
        .then(|| vec![Vec::with_capacity(config.horizon as usize); n]);
    let mut decision_log = config
        .record_decisions
        .then(|| Vec::with_capacity(config.horizon as usize));

    for slot in 0..config.horizon {
        // 1. hidden sources advance
        for (arm, state) in config.arms.iter().zip(hidden.iter_mut()) {
            *state = arm.source.sample_step(*state, &mut rng);
        }
        for (arm_hist, &state) in history.iter_mut().zip(&hidden) {
            let depth = arm_hist.len();
            arm_hist[(slot % depth as u64) as usize] = state;
        }
        if let Some(trace) = aoi_trace.as_mut() {
            for (t, s) in trace.iter_mut().zip(&states) {
                t.push(s.delta as u64);
            }
        }

        // 2. the policy decides from the observable states
        let mut delivered: Vec<Option<(usize, usize)>> = vec![None; n]; // (age, obs)
        let decision = match config.policy {
            PolicyKind::Netgain => {
                netgain_select(slot, netgain_tables.as_ref().unwrap(), &states, m)?
            }
            PolicyKind::Randomized => randomized_select(slot, n, m, &mut rng),
            PolicyKind::MaxAge => maxage_select(slot, &states, m),
            PolicyKind::Periodic { .. } => {
                let queue = queue.as_mut().unwrap();
                let (decision, packets) = periodic_step(queue, n, m, slot);
                // 3a. one channel per packet; queued packets deliver stale
                // observations dated by their generation slot
                for packet in packets {
                    attempts[packet.arm] += 1;
                    if rng.random::<f64>() < config.arms[packet.arm].source.success_prob() {
                        successes[packet.arm] += 1;
                        let age = (slot + 1 - packet.generated_at) as usize;
                        let depth = history[packet.arm].len();
                        let obs =
                            history[packet.arm][(packet.generated_at % depth as u64) as usize];
                        delivered[packet.arm] = Some((age, obs));
                    }
                }
                decision
            }
        };

        // 3b. sample-then-transmit policies send the current hidden state
        if !matches!(config.policy, PolicyKind::Periodic { .. }) {
            for &arm in &decision.scheduled {
                attempts[arm] += 1;
                if rng.random::<f64>() < config.arms[arm].source.success_prob() {
                    successes[arm] += 1;
                    delivered[arm] = Some((1, hidden[arm]));
                }
            }
        }

        // 4. age update and penalty accrual at the updated state
        for (i, state) in states.iter_mut().enumerate() {
            match delivered[i] {
                Some((age, obs)) => *state = ArmState::new(age, obs),
                None => state.delta += 1,
            }
            if slot >= config.warmup {
                penalty_sum[i] += config.arms[i].penalty.q_clamped(state.delta, state.obs);
            }
        }
        if let Some(log) = decision_log.as_mut() {
            log.push(decision);
        }
    }

    let slots = (config.horizon - config.warmup) as f64;
    let normalized = penalty_sum.iter().sum::<f64>() / (slots * n as f64);
    Ok(SimMetrics {
        per_arm_penalty_sum: penalty_sum,
        normalized_avg_penalty: normalized,
        success_counts: successes,
        attempt_counts: attempts,
        aoi_trace,
        decisions: decision_log,
        horizon: config.horizon,
        warmup: config.warmup,
    })
}

/// Mean and normal-approximation 95% confidence half-width over seeded
/// replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub mean: f64,
    pub ci95_half_width: f64,
    pub values: Vec<f64>,
}

impl ReplicationSummary {
    pub fn interval(&self) -> (f64, f64) {
        (self.mean - self.ci95_half_width, self.mean + self.ci95_half_width)
    }

    pub fn overlaps(&self, other: &ReplicationSummary) -> bool {
        let (a_lo, a_hi) = self.interval();
        let (b_lo, b_hi) = other.interval();
        a_lo <= b_hi && b_lo <= a_hi
    }
}

/// Runs `reps` independent replications with seeds `seed, seed+1, ...`.
pub fn replicate(config: &FleetConfig, reps: usize) -> Result<ReplicationSummary> {
    if reps < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 replications for a confidence interval".into(),
        ));
    }
    let mut slots: Vec<Result<f64>> = Vec::with_capacity(reps);
    slots.resize_with(reps, || Ok(0.0));
    std::thread::scope(|scope| {
        for (r, slot) in slots.iter_mut().enumerate() {
            let mut rep_config = config.clone();
            rep_config.seed = config.seed + r as u64;
            rep_config.record_aoi = false;
            rep_config.record_decisions = false;
            scope.spawn(move || {
                *slot = simulate(&rep_config).map(|m| m.normalized_avg_penalty);
            });
        }
    });
    let values: Vec<f64> = slots.into_iter().collect::<Result<_>>()?;
    Ok(summarize(values))
}

pub(crate) fn summarize(values: Vec<f64>) -> ReplicationSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    ReplicationSummary {
        mean,
        ci95_half_width: 1.96 * (var / n).sqrt(),
        values,
    }
}

/// CSV export: `policy,n,m,seed,horizon,normalized_avg_penalty`, one row
/// per replication value (seeds ascending from the base seed).
pub fn write_metrics_csv<W: Write>(
    w: &mut W,
    config: &FleetConfig,
    summary: &ReplicationSummary,
) -> std::io::Result<()> {
    writeln!(w, "policy,n,m,seed,horizon,normalized_avg_penalty")?;
    for (r, value) in summary.values.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            config.policy.name(),
            config.arms.len(),
            config.channels,
            config.seed + r as u64,
            config.horizon,
            value
        )?;
    }
    Ok(())
}
