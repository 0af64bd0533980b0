//! The experiment configuration document and its resolution into built
//! sources, penalty tables, and per-fleet arm lists.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use netgain_core::config::{LossSpec, SourceSpec};
use netgain_core::lagrangian::{ArmClass, DualOptions};
use netgain_core::markov::MarkovSource;
use netgain_core::penalty::{build_penalty_table, Estimator, LossMatrix, PenaltyTable};

use crate::{CliError, Result};

/// Reference to a document that may be inline or live in its own file,
/// relative to the configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocRef<T> {
    Path(String),
    Inline(T),
}

/// One fleet class: a source plus how many arms of it the fleet carries.
/// Exactly one class may set `fill` to absorb the remainder of the fleet
/// size `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub source: DocRef<SourceSpec>,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub fill: bool,
    /// Start-state descriptor, e.g. `(1,1),down` or a state label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_state: Option<String>,
}

/// Dual-ascent knobs exposed to configuration files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualSpec {
    #[serde(default = "DualSpec::default_beta")]
    pub beta: f64,
    #[serde(default = "DualSpec::default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "DualSpec::default_window")]
    pub window: usize,
    #[serde(default = "DualSpec::default_window_tol")]
    pub window_tol: f64,
}

impl DualSpec {
    fn default_beta() -> f64 {
        1.0
    }
    fn default_max_rounds() -> usize {
        400
    }
    fn default_window() -> usize {
        200
    }
    fn default_window_tol() -> f64 {
        1e-3
    }

    pub fn options(&self, seed: u64) -> DualOptions {
        DualOptions {
            beta: self.beta,
            max_rounds: self.max_rounds,
            window: self.window,
            window_tol: self.window_tol,
            seed,
            ..DualOptions::default()
        }
    }
}

impl Default for DualSpec {
    fn default() -> Self {
        DualSpec {
            beta: Self::default_beta(),
            max_rounds: Self::default_max_rounds(),
            window: Self::default_window(),
            window_tol: Self::default_window_tol(),
        }
    }
}

/// The experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Channel count M.
    #[serde(default = "ExperimentConfig::default_m")]
    pub m: usize,
    /// Age-truncation horizon of penalty tables and solvers.
    #[serde(default = "ExperimentConfig::default_delta_max")]
    pub delta_max: usize,
    /// Simulation slots per replication.
    #[serde(default = "ExperimentConfig::default_horizon")]
    pub horizon: u64,
    /// Fraction of the horizon excluded from averages.
    #[serde(default = "ExperimentConfig::default_warmup_frac")]
    pub warmup_frac: f64,
    #[serde(default = "ExperimentConfig::default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fleet size for the single-fleet commands; sweeps supply their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub loss: DocRef<LossSpec>,
    pub classes: Vec<ClassSpec>,
    /// Policies compared by `sweep`.
    #[serde(default = "ExperimentConfig::default_policies")]
    pub policies: Vec<String>,
    /// FIFO buffer of the periodic baseline.
    #[serde(default = "ExperimentConfig::default_buffer")]
    pub buffer: usize,
    /// Fleet sizes of the `sweep` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_n: Option<Vec<usize>>,
    /// Scaling factors of the `scale` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<usize>>,
    /// Observations plotted by `penalty-curve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_states: Option<Vec<String>>,
    /// Class whose source the penalty curve reads; defaults to the fill
    /// class when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_class: Option<String>,
    #[serde(default)]
    pub dual: DualSpec,
}

impl ExperimentConfig {
    fn default_m() -> usize {
        10
    }
    fn default_delta_max() -> usize {
        100
    }
    fn default_horizon() -> u64 {
        100_000
    }
    fn default_warmup_frac() -> f64 {
        0.1
    }
    fn default_replications() -> usize {
        10
    }
    fn default_policies() -> Vec<String> {
        vec!["periodic".into(), "randomized".into(), "netgain".into()]
    }
    fn default_buffer() -> usize {
        20
    }

    pub fn warmup(&self) -> u64 {
        (self.horizon as f64 * self.warmup_frac).floor() as u64
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn resolve_doc<T, F>(doc: &DocRef<T>, base_dir: &Path, parse: F) -> Result<T>
where
    T: Clone,
    F: Fn(&str) -> netgain_core::Result<T>,
{
    match doc {
        DocRef::Inline(value) => Ok(value.clone()),
        DocRef::Path(rel) => {
            let path = base_dir.join(rel);
            let text = read_file(&path)?;
            parse(&text).map_err(CliError::Core)
        }
    }
}

/// A class with its artifacts built: source, optimal-estimator penalty
/// table, and resolved start state.
pub struct ClassArtifacts {
    pub name: String,
    pub source: Arc<MarkovSource>,
    pub penalty: Arc<PenaltyTable>,
    pub start_state: usize,
    pub fill: bool,
    pub count: usize,
}

/// A fully resolved experiment: configuration echo plus built artifacts.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub loss: LossMatrix,
    pub classes: Vec<ClassArtifacts>,
}

impl Experiment {
    pub fn load(config_path: &Path, delta_max_override: Option<usize>) -> Result<Experiment> {
        let text = read_file(config_path)?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
        if let Some(delta_max) = delta_max_override {
            config.delta_max = delta_max;
        }
        let base_dir = config_path
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        Experiment::build(config, &base_dir)
    }

    pub fn build(config: ExperimentConfig, base_dir: &Path) -> Result<Experiment> {
        if config.classes.is_empty() {
            return Err(CliError::Config("no fleet classes defined".into()));
        }
        if config.classes.iter().filter(|c| c.fill).count() > 1 {
            return Err(CliError::Config("at most one class may set fill".into()));
        }
        if config.delta_max == 0 {
            return Err(CliError::Config("delta_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&config.warmup_frac) {
            return Err(CliError::Config(format!(
                "warmup_frac {} outside [0, 1)",
                config.warmup_frac
            )));
        }
        let loss_spec = resolve_doc(&config.loss, base_dir, LossSpec::from_json)?;
        let loss = loss_spec.build()?;

        let mut classes = Vec::with_capacity(config.classes.len());
        for spec in &config.classes {
            let source_spec = resolve_doc(&spec.source, base_dir, SourceSpec::from_json)?;
            let source = Arc::new(source_spec.build()?);
            let penalty = Arc::new(build_penalty_table(
                &source,
                &loss,
                &Estimator::optimal(),
                config.delta_max,
            )?);
            let start_state = match &spec.start_state {
                Some(descriptor) => source.parse_state(descriptor)?,
                None => 0,
            };
            classes.push(ClassArtifacts {
                name: spec.name.clone(),
                source,
                penalty,
                start_state,
                fill: spec.fill,
                count: spec.count,
            });
        }
        Ok(Experiment {
            config,
            loss,
            classes,
        })
    }

    /// Per-class arm counts for a fleet of `n` arms: fixed counts are kept
    /// and the fill class absorbs the remainder.
    pub fn class_counts(&self, n: Option<usize>) -> Result<Vec<usize>> {
        let fixed: usize = self.classes.iter().filter(|c| !c.fill).map(|c| c.count).sum();
        let n = match n.or(self.config.n) {
            Some(n) => n,
            None => {
                if self.classes.iter().any(|c| c.fill) {
                    return Err(CliError::Config(
                        "fleet size n is required when a class uses fill".into(),
                    ));
                }
                fixed
            }
        };
        if n < fixed {
            return Err(CliError::Config(format!(
                "fleet size {n} is below the {fixed} fixed arms"
            )));
        }
        let remainder = n - fixed;
        if remainder > 0 && !self.classes.iter().any(|c| c.fill) {
            return Err(CliError::Config(format!(
                "fleet size {n} exceeds the {fixed} declared arms and no class fills"
            )));
        }
        Ok(self
            .classes
            .iter()
            .map(|c| if c.fill { remainder } else { c.count })
            .collect())
    }

    /// Arm classes weighted by the given counts, for the dual machinery.
    pub fn arm_classes(&self, counts: &[usize]) -> Vec<ArmClass> {
        self.classes
            .iter()
            .zip(counts)
            .map(|(class, &count)| {
                ArmClass::new(Arc::clone(&class.source), Arc::clone(&class.penalty), count)
            })
            .collect()
    }
}
