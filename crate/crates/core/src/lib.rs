//! Context-aware status updating over erasure channels.
//!
//! The crate models fleets of Markov signal sources whose danger level must
//! be tracked remotely under a shared channel budget. It provides:
//!
//! - [`markov`]: finite-state sources (gridworld scanners, deterministic-path
//!   robots, explicit chains) with cached multi-step kernels;
//! - [`penalty`]: loss matrices, estimators, L-entropy, and the
//!   situation-unaware penalty table `q(delta, x)` that every scheduler reads;
//! - [`arm`]: the per-arm average-cost MDP solved by relative value
//!   iteration, plus gain tables and an exhaustive-enumeration oracle;
//! - [`lagrangian`]: dual decomposition, subgradient ascent to the
//!   transmission price, and the relaxed lower bound;
//! - [`policy`]: the net-gain maximization scheduler and the baseline
//!   policies (randomized, periodic FIFO, max-age);
//! - [`sim`]: the discrete-time fleet simulator with seeded replications;
//! - [`config`]: JSON descriptions of sources, losses, and policies.

pub mod arm;
pub mod config;
pub mod error;
pub mod lagrangian;
pub mod markov;
mod matrix;
pub mod penalty;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
