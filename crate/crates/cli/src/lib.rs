//! Experiment front end: configuration loading, seed bookkeeping, and the
//! reproduction studies (penalty curves, dual solves, fleet simulations,
//! policy sweeps, and fluid-scaling runs). Every command writes CSV plus a
//! JSON sidecar capturing the resolved configuration, so a run can be
//! replayed exactly from its outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod seed;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] netgain_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
