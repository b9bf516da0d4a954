//! The run configuration: one TOML file with a section per stage.
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected. `schema_version` is required and must equal [`SCHEMA_VERSION`].

use std::path::Path;

use netlasso::dgp::ErrorLaw;
use netlasso::estimator::TuningPolicy;
use netlasso::inference::InferenceOptions;
use netlasso::montecarlo::{GeneratorSpec, LeaderBlock, ModelKind, StudyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub tuning: TuningPolicy,
    #[serde(default)]
    pub inference: InferenceOptions,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub counterfactual: CounterfactualSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelSection::default(),
            tuning: TuningPolicy::default(),
            inference: InferenceOptions::default(),
            generate: GenerateSection::default(),
            simulate: SimulateSection::default(),
            study: StudyConfig::default(),
            counterfactual: CounterfactualSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Network powers in the cliques first stage.
    pub k_powers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kind: ModelKind::Base, k_powers: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub n: usize,
    pub generator: GeneratorSpec,
    /// Nodes whose mutual links are replaced by `leader_block`.
    pub leaders: Vec<usize>,
    pub leader_block: LeaderBlock,
    /// Independent draws written as separate networks.
    pub networks: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { n: 200, generator: GeneratorSpec::ErdosRenyi { p: 0.1 }, leaders: (0..5).collect(), leader_block: LeaderBlock::Chain, networks: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Nodes with nonzero effects, as 0-based indices.
    pub leaders: Vec<usize>,
    /// Effects of `leaders`, one list per network; missing networks get zeros.
    pub effects: Vec<Vec<f64>>,
    /// One coefficient per simulated covariate.
    pub beta0: Vec<f64>,
    /// Homogeneous effect for the cliques model.
    pub gamma0: f64,
    pub sigma: f64,
    pub error_law: ErrorLaw,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { leaders: (0..5).collect(), effects: vec![vec![0.5; 5]], beta0: vec![3.0], gamma0: 0.05, sigma: 1.0, error_law: ErrorLaw::Gaussian }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonChoice {
    #[default]
    Zero,
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualSection {
    /// External ids forced to 1.
    pub leaders: Vec<String>,
    pub epsilon: EpsilonChoice,
    pub draws: usize,
}

impl Default for CounterfactualSection {
    fn default() -> Self {
        Self { leaders: Vec::new(), epsilon: EpsilonChoice::Zero, draws: 200 }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |message: String| CliError::Config { path: origin.to_string(), message };
        let raw: toml::Value = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        match raw.get("schema_version").and_then(toml::Value::as_integer) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => return Err(err(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})"))),
            None => return Err(err("missing integer `schema_version`".into())),
        }
        let config: Config = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        config.tuning.validate().map_err(|e| err(format!("[tuning] {e}")))?;
        config.inference.validate().map_err(|e| err(format!("[inference] {e}")))?;
        config.study.validate().map_err(|e| err(format!("[study] {e}")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Data(e.to_string()))
    }
}
