//! JSON descriptions of sources, loss matrices, and policy choices.
//!
//! Source documents:
//! `{"type":"gridworld","rows":5,"cols":12,"vertical_prob":0.05,
//!   "row_danger":["safe","safe","safe","cautious","dangerous"],
//!   "success_prob":0.95}`,
//! `{"type":"deterministic","path":[[1,1],[1,2]],"success_prob":0.95}`, or
//! `{"type":"explicit","states":["a","b"],"matrix":[[0.9,0.1],[0.1,0.9]],
//!   "danger":["safe","dangerous"],"success_prob":0.9}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    build_deterministic_robot, build_explicit, build_gridworld, DangerLevel, GridworldSpec,
    MarkovSource,
};
use crate::penalty::LossMatrix;
use crate::policy::FifoQueue;
use crate::sim::PolicyKind;

/// A source definition as it appears in configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SourceSpec {
    Gridworld(GridworldSpec),
    Deterministic {
        path: Vec<(u32, u32)>,
        #[serde(default = "default_success_prob")]
        success_prob: f64,
    },
    Explicit {
        states: Vec<String>,
        matrix: Vec<Vec<f64>>,
        danger: Vec<DangerLevel>,
        success_prob: f64,
    },
}

fn default_success_prob() -> f64 {
    1.0
}

impl SourceSpec {
    pub fn build(&self) -> Result<MarkovSource> {
        match self {
            SourceSpec::Gridworld(spec) => build_gridworld(spec),
            SourceSpec::Deterministic { path, success_prob } => {
                build_deterministic_robot(path, *success_prob)
            }
            SourceSpec::Explicit {
                states,
                matrix,
                danger,
                success_prob,
            } => build_explicit(
                "explicit",
                states.clone(),
                matrix.clone(),
                danger.clone(),
                *success_prob,
            ),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("source definition: {e}")))
    }
}

/// A loss matrix definition: rows are true levels, columns are actions
/// (the level labels unless `actions` is given).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossSpec {
    pub labels: Vec<DangerLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    pub loss: Vec<Vec<f64>>,
}

impl LossSpec {
    pub fn build(&self) -> Result<LossMatrix> {
        match &self.actions {
            Some(actions) => LossMatrix::new(self.labels.clone(), actions.clone(), self.loss.clone()),
            None => LossMatrix::square(self.labels.clone(), self.loss.clone()),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("loss definition: {e}")))
    }
}

/// Policy choice and parameters: `{"policy":"netgain"}` or
/// `{"policy":"periodic","buffer":20}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySpec {
    pub policy: String,
    #[serde(default = "default_buffer")]
    pub buffer: usize,
}

fn default_buffer() -> usize {
    FifoQueue::DEFAULT_CAPACITY
}

impl PolicySpec {
    pub fn named(name: &str) -> Self {
        PolicySpec {
            policy: name.to_owned(),
            buffer: default_buffer(),
        }
    }

    pub fn kind(&self) -> Result<PolicyKind> {
        match self.policy.as_str() {
            "netgain" => Ok(PolicyKind::Netgain),
            "randomized" => Ok(PolicyKind::Randomized),
            "periodic" => Ok(PolicyKind::Periodic {
                buffer: self.buffer,
            }),
            "maxage" => Ok(PolicyKind::MaxAge),
            other => Err(Error::InvalidConfig(format!(
                "unknown policy `{other}`; expected netgain, randomized, periodic, or maxage"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{Direction, StateTag};

    #[test]
    fn gridworld_json_round_trip() {
        let json = r#"{"type":"gridworld","rows":5,"cols":12,"vertical_prob":0.05,
            "horizontal_prob":0.95,
            "row_danger":["safe","safe","safe","cautious","dangerous"],
            "success_prob":0.95}"#;
        let spec = SourceSpec::from_json(json).unwrap();
        let source = spec.build().unwrap();
        assert_eq!(source.n_states(), 216);
        assert!((source.success_prob() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn gridworld_defaults_fill_in() {
        let spec = SourceSpec::from_json(r#"{"type":"gridworld"}"#).unwrap();
        let source = spec.build().unwrap();
        assert_eq!(source.n_states(), 216);
        let x = source
            .state_index(&StateTag::Grid { row: 5, col: 1, dir: Direction::Up })
            .unwrap();
        assert_eq!(source.danger_of(x).as_str(), "dangerous");
    }

    #[test]
    fn deterministic_json() {
        let json = r#"{"type":"deterministic","path":[[1,1],[1,2],[2,2]],"success_prob":0.95}"#;
        let source = SourceSpec::from_json(json).unwrap().build().unwrap();
        assert_eq!(source.n_states(), 3);
        assert_eq!(source.transition_row(2)[0], 1.0);
    }

    #[test]
    fn explicit_json() {
        let json = r#"{"type":"explicit","states":["calm","storm"],
            "matrix":[[0.9,0.1],[0.3,0.7]],
            "danger":["safe","dangerous"],"success_prob":0.9}"#;
        let source = SourceSpec::from_json(json).unwrap().build().unwrap();
        assert_eq!(source.n_states(), 2);
        assert_eq!(source.danger_of(1).as_str(), "dangerous");
        assert_eq!(source.parse_state("storm").unwrap(), 1);
    }

    #[test]
    fn loss_json_matches_default_safety() {
        let json = r#"{"labels":["safe","cautious","dangerous"],
            "loss":[[0,10,10],[50,0,20],[200,50,0]]}"#;
        let loss = LossSpec::from_json(json).unwrap().build().unwrap();
        assert_eq!(loss, LossMatrix::default_safety());
    }

    #[test]
    fn policy_specs_resolve() {
        let p: PolicySpec = serde_json::from_str(r#"{"policy":"periodic","buffer":20}"#).unwrap();
        assert_eq!(p.kind().unwrap(), PolicyKind::Periodic { buffer: 20 });
        assert_eq!(
            PolicySpec::named("netgain").kind().unwrap(),
            PolicyKind::Netgain
        );
        assert!(PolicySpec::named("whittle").kind().is_err());
    }

    #[test]
    fn malformed_documents_error_cleanly() {
        assert!(SourceSpec::from_json(r#"{"type":"gridworld","rows":1}"#)
            .unwrap()
            .build()
            .is_err());
        assert!(SourceSpec::from_json(r#"{"type":"mystery"}"#).is_err());
        assert!(LossSpec::from_json(r#"{"labels":[]}"#).is_err());
    }
}
