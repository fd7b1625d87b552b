//! Command implementations. Each returns an [`Outcome`] holding the files to
//! write, the text to print and any bound regression, so the binary and the
//! tests share one code path.

mod analysis;
mod demo;
mod reproduce;
mod simulate;

use serde::Serialize;

use pricing_lab::curves::Objective;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::CliError;

pub use analysis::{cmd_closeness, cmd_curve};
pub use demo::{cmd_demo_anonymous_welfare, cmd_demo_unbounded_gap, UnboundedGapReport};
pub use reproduce::{cmd_reproduce, fig1a_config, fig1b_config, Check, Figure, Summary};
pub use simulate::{cmd_simulate, Mechanism, SimulateReport};

/// Command-line values that replace the corresponding config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub grid: Option<usize>,
    pub objective: Option<Objective>,
}

impl Overrides {
    pub fn apply(&self, config: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut c = config.clone();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(s) = self.samples {
            c.samples = s;
        }
        if let Some(g) = self.grid {
            c.grid.quantiles = g;
        }
        if let Some(o) = self.objective {
            c.objective = o;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// Paths relative to the output directory, with their contents.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
    pub regression: Option<String>,
}

impl Outcome {
    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| CliError::Numerical(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn add_csv(&mut self, name: &str, digest: &str, body: &str) {
        let text = format!("# config_sha256={digest}\n{body}");
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub fn line(&mut self, text: impl AsRef<str>) {
        self.summary.push_str(text.as_ref());
        self.summary.push('\n');
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &std::path::Path) -> Result<(), CliError> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(())
    }
}

/// Effective configuration after overrides, with the source digest.
pub(crate) fn effective(
    loaded: &LoadedConfig,
    overrides: &Overrides,
) -> Result<(ExperimentConfig, String), CliError> {
    Ok((overrides.apply(&loaded.config)?, loaded.digest.clone()))
}

/// `j / m` for `j = 0..=m` merged with `extra`, sorted and deduplicated.
pub(crate) fn merged_grid(m: usize, extra: &[f64]) -> Vec<f64> {
    let mut qs = pricing_lab::curves::quantile_grid(m);
    qs.extend_from_slice(extra);
    qs.sort_by(f64::total_cmp);
    qs.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    qs
}

pub(crate) fn points_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("q,payoff\n");
    for (q, v) in points {
        s.push_str(&format!("{q:.11e},{v:.11e}\n"));
    }
    s
}
