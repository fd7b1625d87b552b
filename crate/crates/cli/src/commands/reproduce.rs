use serde::{Deserialize, Serialize};

use pricing_lab::curves::quantile_grid;
use pricing_lab::envs::Environment;
use pricing_lab::exante::closeness_with;
use pricing_lab::mech::{default_price_grid, iid_ear, mpm_run, opp_iid_dp, PricedAgent};

use super::analysis::{discretized, price_posting_on};
use super::simulate::exante_hull;
use super::{effective, points_csv, Outcome, Overrides};
use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::CliError;

const FIG1A: &str = r#"{
  "schema": 1,
  "seed": 1,
  "agents": [
    {
      "value": {"family": "uniform", "lo": 0.0, "hi": 1.0},
      "budget": {"family": "uniform", "lo": 0.0, "hi": 1.0},
      "utility": "private-budget"
    }
  ],
  "environment": {"kind": "k-unit", "k": 1},
  "objective": "revenue",
  "grid": {"quantiles": 50, "atoms": 50, "curve": 2000, "prices": 20000},
  "samples": 1
}
"#;

const FIG1B: &str = r#"{
  "schema": 1,
  "seed": 1,
  "agents": [
    {
      "value": {"family": "uniform", "lo": 0.0, "hi": 1.0},
      "budget": {"family": "uniform", "lo": 0.0, "hi": 1.0},
      "utility": "private-budget",
      "copies": 15
    }
  ],
  "environment": {"kind": "k-unit", "k": 1},
  "objective": "revenue",
  "grid": {"quantiles": 50, "atoms": 50, "curve": 1000, "prices": 20000},
  "samples": 1000000
}
"#;

const RATIO_TOL: f64 = 0.02;
const FIG1A_MAX_TOL: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Price-posting and ex ante revenue curves of one uniform-uniform agent.
    Fig1a,
    /// EAR over oblivious pricing and over the marginal payoff mechanism.
    Fig1b,
}

pub fn fig1a_config() -> LoadedConfig {
    ExperimentConfig::from_json(FIG1A.as_bytes()).expect("built-in config is valid")
}

pub fn fig1b_config() -> LoadedConfig {
    ExperimentConfig::from_json(FIG1B.as_bytes()).expect("built-in config is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub computed: f64,
    pub reported: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, computed: f64, reported: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            computed,
            reported,
            tolerance,
            pass: (computed - reported).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub figure: Figure,
    pub config_sha256: String,
    pub seed: u64,
    pub samples: u64,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Grids are pinned; only the seed and sample count may be overridden.
fn pinned(overrides: &Overrides) -> Overrides {
    Overrides {
        seed: overrides.seed,
        samples: overrides.samples,
        ..Overrides::default()
    }
}

fn finish(out: &mut Outcome, figure: Figure, cfg: &ExperimentConfig, digest: String, checks: Vec<Check>)
    -> Result<Summary, CliError> {
    for c in &checks {
        out.line(format!(
            "{}: computed {:.4}, reported {} +/- {} -> {}",
            c.name,
            c.computed,
            c.reported,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        ));
    }
    let summary = Summary {
        figure,
        config_sha256: digest,
        seed: cfg.seed,
        samples: cfg.samples,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    };
    let dir = match figure {
        Figure::Fig1a => "fig1a",
        Figure::Fig1b => "fig1b",
    };
    out.add_json(&format!("{dir}/summary.json"), &summary)?;
    Ok(summary)
}

fn fig1a(overrides: &Overrides) -> Result<(Outcome, Summary), CliError> {
    let (cfg, digest) = effective(&fig1a_config(), &pinned(overrides))?;
    let model = cfg.agents[0].to_model()?;
    let g = &cfg.grid;
    let (report, curve) = closeness_with(&model, cfg.objective, g.quantiles, g.atoms)?;
    let grid = quantile_grid(g.quantiles);
    let disc = discretized(&model, g.atoms)?;
    let (raw, hull) = price_posting_on(&disc, cfg.objective, &grid, g.curve)?;
    let (raw_c, hull_c) = price_posting_on(&model, cfg.objective, &grid, g.curve)?;

    let mut out = Outcome::default();
    out.add_csv("fig1a/price_posting.csv", &digest, &points_csv(&raw));
    out.add_csv("fig1a/price_posting_hull.csv", &digest, &points_csv(&hull));
    out.add_csv("fig1a/exante.csv", &digest, &points_csv(&curve.points()));
    out.add_csv("fig1a/price_posting_continuous.csv", &digest, &points_csv(&raw_c));
    out.add_csv("fig1a/price_posting_continuous_hull.csv", &digest, &points_csv(&hull_c));
    out.add_json("fig1a/closeness.json", &report)?;
    let checks = vec![
        Check::new("fig1a exante max", curve.max(), 0.195, FIG1A_MAX_TOL),
        Check::new("fig1a zeta", report.zeta, 1.02, RATIO_TOL),
    ];
    let summary = finish(&mut out, Figure::Fig1a, &cfg, digest, checks)?;
    Ok((out, summary))
}

#[derive(Debug, Serialize)]
struct Fig1bRow {
    n: usize,
    ear: f64,
    opp_dp: f64,
    mpm: f64,
    mpm_se: f64,
    ratio_opp: f64,
    ratio_mpm: f64,
}

fn fig1b(overrides: &Overrides) -> Result<(Outcome, Summary), CliError> {
    let (cfg, digest) = effective(&fig1b_config(), &pinned(overrides))?;
    let model = cfg.agents[0].to_model()?;
    let n_max = cfg.num_agents();
    let g = &cfg.grid;
    let Environment::KUnit { k } = cfg.environment else {
        unreachable!("pinned environment is k-unit")
    };
    let extra: Vec<f64> = (1..=n_max).map(|n| (k as f64 / n as f64).min(1.0)).collect();
    let hull = exante_hull(&model, cfg.objective, g.quantiles, g.atoms, &extra)?;
    let prices = default_price_grid(&model, g.prices);
    let priced = PricedAgent::with_grid(&model, cfg.objective, g.curve)?;

    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let ear = iid_ear(&hull, n, k);
        let dp = opp_iid_dp(&model, n, k, cfg.objective, &prices)?.value();
        let agents = vec![priced.clone(); n];
        let mpm = mpm_run(&agents, &cfg.environment, cfg.samples, cfg.seed)?;
        rows.push(Fig1bRow {
            n,
            ear,
            opp_dp: dp,
            mpm: mpm.mean,
            mpm_se: mpm.std_err,
            ratio_opp: ear / dp,
            ratio_mpm: ear / mpm.mean,
        });
    }
    let mut csv = String::from("n,ear,opp_dp,mpm,mpm_se,ratio_opp,ratio_mpm\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}\n",
            r.n, r.ear, r.opp_dp, r.mpm, r.mpm_se, r.ratio_opp, r.ratio_mpm
        ));
    }
    let mut out = Outcome::default();
    out.add_csv("fig1b/ratios.csv", &digest, &csv);
    let last = rows.last().expect("at least one agent");
    let checks = vec![
        Check::new(&format!("fig1b EAR/OPP n={}", last.n), last.ratio_opp, 1.23, RATIO_TOL),
        Check::new(&format!("fig1b EAR/MPM n={}", last.n), last.ratio_mpm, 1.11, RATIO_TOL),
    ];
    let summary = finish(&mut out, Figure::Fig1b, &cfg, digest, checks)?;
    Ok((out, summary))
}

/// Regenerates the data behind a figure and compares the headline numbers
/// with the reported values.
pub fn cmd_reproduce(figure: Figure, overrides: &Overrides) -> Result<(Outcome, Summary), CliError> {
    match figure {
        Figure::Fig1a => fig1a(overrides),
        Figure::Fig1b => fig1b(overrides),
    }
}
