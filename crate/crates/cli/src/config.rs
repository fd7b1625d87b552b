//! Experiment configuration: a versioned JSON document describing agents,
//! the feasibility environment, grids, sample counts and the seed.

use std::path::{Path, PathBuf};

use pricing_lab::curves::Objective;
use pricing_lab::dist::{AgentModel, ParametricDist, Utility};
use pricing_lab::envs::Environment;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Quantile grid `j / quantiles` of exported curves.
    #[serde(default = "default_quantiles")]
    pub quantiles: usize,
    /// Atoms per continuous marginal in the ex ante program's type grid.
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    /// Quantile resolution of price-posting curves used by mechanisms.
    #[serde(default = "default_curve")]
    pub curve: usize,
    /// Candidate prices for dynamic programs and anonymous pricing.
    #[serde(default = "default_prices")]
    pub prices: usize,
}

fn default_quantiles() -> usize {
    50
}
fn default_atoms() -> usize {
    50
}
fn default_curve() -> usize {
    1000
}
fn default_prices() -> usize {
    20_000
}
fn default_samples() -> u64 {
    100_000
}
fn default_copies() -> usize {
    1
}
fn default_environment() -> Environment {
    Environment::KUnit { k: 1 }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            quantiles: default_quantiles(),
            atoms: default_atoms(),
            curve: default_curve(),
            prices: default_prices(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub value: ParametricDist,
    /// Required for budgeted utilities; a point mass for public budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<ParametricDist>,
    pub utility: Utility,
    /// Number of i.i.d. copies of this agent.
    #[serde(default = "default_copies")]
    pub copies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    #[serde(default = "default_environment")]
    pub environment: Environment,
    pub objective: Objective,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// A validated configuration together with the digest of its source bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn config_err(path: impl Into<String>, msg: impl ToString) -> CliError {
    CliError::Config {
        path: path.into(),
        msg: msg.to_string(),
    }
}

impl AgentSpec {
    pub fn to_model(&self) -> Result<AgentModel, pricing_lab::Error> {
        match self.utility {
            Utility::Linear => AgentModel::linear(self.value.clone()),
            Utility::PublicBudget => match &self.budget {
                Some(ParametricDist::PointMass { v }) => {
                    AgentModel::public_budget(self.value.clone(), *v)
                }
                _ => Err(pricing_lab::Error::Config(
                    "a public budget must be a point-mass law".into(),
                )),
            },
            Utility::PrivateBudget => match &self.budget {
                Some(b) => AgentModel::private_budget(self.value.clone(), b.clone()),
                None => Err(pricing_lab::Error::Config(
                    "a private budget needs a budget law".into(),
                )),
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(bytes: &[u8]) -> Result<LoadedConfig, CliError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(path, e.into_inner())
        })?;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            digest: sha256_hex(bytes),
        })
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| config_err("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(config_err(
                "schema",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        if self.agents.is_empty() {
            return Err(config_err("agents", "at least one agent is required"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.copies == 0 {
                return Err(config_err(format!("agents[{i}].copies"), "must be at least 1"));
            }
            if a.utility == Utility::Linear && a.budget.is_some() {
                return Err(config_err(
                    format!("agents[{i}].budget"),
                    "linear agents take no budget",
                ));
            }
            a.to_model()
                .map_err(|e| config_err(format!("agents[{i}]"), e))?;
        }
        for (name, v) in [
            ("grid.quantiles", self.grid.quantiles),
            ("grid.atoms", self.grid.atoms),
            ("grid.curve", self.grid.curve),
            ("grid.prices", self.grid.prices),
        ] {
            if v < 2 {
                return Err(config_err(name, format!("grid size {v} must be at least 2")));
            }
        }
        if self.samples == 0 {
            return Err(config_err("samples", "must be positive"));
        }
        self.environment
            .validate(self.num_agents())
            .map_err(|e| config_err("environment", e))
    }

    pub fn num_agents(&self) -> usize {
        self.agents.iter().map(|a| a.copies).sum()
    }

    /// One model per agent, copies expanded in listing order.
    pub fn models(&self) -> Result<Vec<AgentModel>, CliError> {
        let mut out = Vec::with_capacity(self.num_agents());
        for (i, a) in self.agents.iter().enumerate() {
            let m = a
                .to_model()
                .map_err(|e| config_err(format!("agents[{i}]"), e))?;
            out.extend(std::iter::repeat_n(m, a.copies));
        }
        Ok(out)
    }

    /// Index of the `AgentSpec` each expanded agent came from.
    pub fn spec_of_agent(&self) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .flat_map(|(i, a)| std::iter::repeat_n(i, a.copies))
            .collect()
    }
}
