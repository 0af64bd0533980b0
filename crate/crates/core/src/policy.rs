//! Scheduling policies: net-gain maximization and the baselines it is
//! compared against (uniform random selection, periodic updating through a
//! shared FIFO queue, and greedy max-age).

use std::collections::VecDeque;

use rand::Rng;

use crate::arm::{ArmState, GainTable};
use crate::error::{Error, Result};

/// The arms scheduled in one slot. Indices are distinct and ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulingDecision {
    pub slot: u64,
    pub scheduled: Vec<usize>,
}

impl SchedulingDecision {
    pub fn len(&self) -> usize {
        self.scheduled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scheduled.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.scheduled.binary_search(&arm).is_ok()
    }
}

/// Net-gain maximization: schedule up to `m` arms with the highest strictly
/// positive gain at their current state. Ties prefer the lower arm index;
/// arms with nonpositive gain are never scheduled, even on idle channels.
/// Ages beyond a table's horizon are clamped; an unknown observation index
/// is an error.
pub fn netgain_select(
    slot: u64,
    gains: &[&GainTable],
    states: &[ArmState],
    m: usize,
) -> Result<SchedulingDecision> {
    assert_eq!(gains.len(), states.len(), "one gain table per arm");
    debug_assert!(
        gains.windows(2).all(|w| w[0].lambda() == w[1].lambda()),
        "gain tables must be solved at the same price"
    );
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(states.len());
    for (i, (table, state)) in gains.iter().zip(states).enumerate() {
        if state.obs >= table.n_states() {
            return Err(Error::StateIndex {
                index: state.obs,
                count: table.n_states(),
            });
        }
        let alpha = table.gain(state.delta, state.obs);
        if alpha > 0.0 {
            ranked.push((alpha, i));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.truncate(m);
    let mut scheduled: Vec<usize> = ranked.into_iter().map(|(_, i)| i).collect();
    scheduled.sort_unstable();
    Ok(SchedulingDecision { slot, scheduled })
}

/// Uniformly random selection of `min(n, m)` distinct arms.
pub fn randomized_select<R: Rng + ?Sized>(
    slot: u64,
    n_arms: usize,
    m: usize,
    rng: &mut R,
) -> SchedulingDecision {
    let mut scheduled = rand::seq::index::sample(rng, n_arms, m.min(n_arms)).into_vec();
    scheduled.sort_unstable();
    SchedulingDecision { slot, scheduled }
}

/// Greedy age baseline: the `m` arms with the largest age, ties by index.
pub fn maxage_select(slot: u64, states: &[ArmState], m: usize) -> SchedulingDecision {
    let mut ranked: Vec<usize> = (0..states.len()).collect();
    ranked.sort_by(|&a, &b| states[b].delta.cmp(&states[a].delta).then(a.cmp(&b)));
    ranked.truncate(m);
    ranked.sort_unstable();
    SchedulingDecision {
        slot,
        scheduled: ranked,
    }
}

/// A sensor update waiting in the shared queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedPacket {
    pub arm: usize,
    pub generated_at: u64,
}

/// Bounded shared FIFO queue of the periodic-updating baseline.
#[derive(Debug, Clone)]
pub struct FifoQueue {
    entries: VecDeque<QueuedPacket>,
    capacity: usize,
    offered: u64,
    dropped: u64,
    delivered: u64,
}

impl FifoQueue {
    pub const DEFAULT_CAPACITY: usize = 20;

    pub fn new(capacity: usize) -> Self {
        FifoQueue {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            offered: 0,
            dropped: 0,
            delivered: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Packets offered, rejected, and transmitted so far. Conservation:
    /// offered = delivered + dropped + len.
    pub fn counters(&self) -> (u64, u64, u64) {
        (self.offered, self.dropped, self.delivered)
    }

    fn offer(&mut self, packet: QueuedPacket) {
        self.offered += 1;
        if self.entries.len() == self.capacity {
            // drop-newest: the arriving packet is discarded
            self.dropped += 1;
        } else {
            self.entries.push_back(packet);
        }
    }

    fn take(&mut self) -> Option<QueuedPacket> {
        let packet = self.entries.pop_front();
        if packet.is_some() {
            self.delivered += 1;
        }
        packet
    }
}

/// One slot of periodic updating: every sensor offers a fresh update to the
/// shared queue in arm-index order (overflow drops the arriving packet),
/// then up to `m` head-of-queue packets are transmitted. Returns the
/// decision (distinct arms) and the transmitted packets, whose generation
/// times date the delivered observations.
pub fn periodic_step(
    queue: &mut FifoQueue,
    n_arms: usize,
    m: usize,
    slot: u64,
) -> (SchedulingDecision, Vec<QueuedPacket>) {
    for arm in 0..n_arms {
        queue.offer(QueuedPacket {
            arm,
            generated_at: slot,
        });
    }
    let mut transmitted = Vec::with_capacity(m.min(queue.len()));
    for _ in 0..m {
        match queue.take() {
            Some(packet) => transmitted.push(packet),
            None => break,
        }
    }
    let mut scheduled: Vec<usize> = transmitted.iter().map(|p| p.arm).collect();
    scheduled.sort_unstable();
    scheduled.dedup();
    (SchedulingDecision { slot, scheduled }, transmitted)
}
