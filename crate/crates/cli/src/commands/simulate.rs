use serde::{Deserialize, Serialize};

use pricing_lab::curves::{ConcaveCurve, Objective};
use pricing_lab::dist::AgentModel;
use pricing_lab::envs::{ear_optimize, Environment};
use pricing_lab::exante::{exante_lp_sweep, type_grid};
use pricing_lab::mech::{
    best_anonymous_price, correlation_gap_policy, default_price_grid, mpm_run, opp_evaluate,
    opp_iid_dp, spp_simulate, OrderMode, PricedAgent,
};
use pricing_lab::sim::SimResult;

use super::{effective, merged_grid, Outcome, Overrides};
use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::CliError;

/// Largest per-agent price grid tried by anonymous pricing.
const AP_PRICES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// Sequential posted pricing with the correlation-gap policy.
    Spp,
    /// Oblivious posted pricing against the worst arrival order.
    Opp,
    /// Marginal payoff mechanism.
    Mpm,
    /// One anonymous price for everyone.
    Ap,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Spp => "spp",
            Mechanism::Opp => "opp",
            Mechanism::Mpm => "mpm",
            Mechanism::Ap => "ap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub config_sha256: String,
    pub mechanism: Mechanism,
    /// `monte-carlo`, `exact-worst-order`, `dp` or `exact-anonymous`.
    pub mode: String,
    pub objective: Objective,
    pub seed: u64,
    /// Ex ante relaxation over the hulls of the agents' ex ante curves.
    pub ear: f64,
    pub value: f64,
    pub std_err: f64,
    /// `ear / value`.
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SimResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    /// Price offered to each arrival position while every unit is left.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_prices: Option<Vec<f64>>,
}

/// Hull of the relaxed ex ante curve sampled on `j / quantiles` and `extra`.
pub(crate) fn exante_hull(
    model: &AgentModel,
    objective: Objective,
    quantiles: usize,
    atoms: usize,
    extra: &[f64],
) -> Result<ConcaveCurve, CliError> {
    let (values, budgets) = type_grid(model, atoms)?;
    let qs = merged_grid(quantiles, extra);
    let mechs = exante_lp_sweep(&values, &budgets, objective, &qs)?;
    let points: Vec<(f64, f64)> = qs
        .iter()
        .zip(&mechs)
        .map(|(&q, m)| (q, m.payoff.max(0.0)))
        .collect();
    Ok(ConcaveCurve::from_points(&points))
}

/// EAR with one ex ante curve per listed agent; the grid also holds every
/// `c / n` so symmetric profiles are evaluated without interpolation.
pub(crate) fn exante_ear(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    let n = cfg.num_agents();
    let extra: Vec<f64> = (1..=n).map(|c| c as f64 / n as f64).collect();
    let per_spec = cfg
        .agents
        .iter()
        .map(|s| {
            exante_hull(&s.to_model()?, cfg.objective, cfg.grid.quantiles, cfg.grid.atoms, &extra)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let hulls: Vec<ConcaveCurve> = cfg
        .spec_of_agent()
        .into_iter()
        .map(|i| per_spec[i].clone())
        .collect();
    Ok(ear_optimize(&hulls, &cfg.environment)?.value)
}

fn ratio(ear: f64, value: f64) -> f64 {
    if value > 0.0 {
        ear / value
    } else {
        f64::INFINITY
    }
}

fn units(env: &Environment) -> Option<usize> {
    match env {
        Environment::KUnit { k } | Environment::Uniform { k } => Some(*k),
        _ => None,
    }
}

pub fn cmd_simulate(
    loaded: &LoadedConfig,
    overrides: &Overrides,
    mechanism: Mechanism,
) -> Result<Outcome, CliError> {
    let (cfg, digest) = effective(loaded, overrides)?;
    let models = cfg.models()?;
    let env = &cfg.environment;
    let ear = exante_ear(&cfg)?;
    let priced = || {
        models
            .iter()
            .map(|m| PricedAgent::with_grid(m, cfg.objective, cfg.grid.curve))
            .collect::<Result<Vec<_>, _>>()
    };
    let mut report = SimulateReport {
        config_sha256: digest,
        mechanism,
        mode: "monte-carlo".into(),
        objective: cfg.objective,
        seed: cfg.seed,
        ear,
        value: 0.0,
        std_err: 0.0,
        ratio: 0.0,
        result: None,
        quantiles: None,
        order: None,
        price: None,
        dp_prices: None,
    };
    let iid = models.windows(2).all(|w| w[0] == w[1]);
    match mechanism {
        Mechanism::Spp => {
            let agents = priced()?;
            let (policy, _) = correlation_gap_policy(&agents, env)?;
            let r = spp_simulate(&agents, env, &policy, cfg.samples, cfg.seed)?;
            report.value = r.mean;
            report.std_err = r.std_err;
            report.quantiles = Some(policy.quantiles.clone());
            report.order = Some(policy.order.clone());
            report.result = Some(r);
        }
        Mechanism::Opp => match units(env) {
            Some(k) if iid => {
                let prices = default_price_grid(&models[0], cfg.grid.prices);
                let table = opp_iid_dp(&models[0], models.len(), k, cfg.objective, &prices)?;
                report.mode = "dp".into();
                report.value = table.value();
                report.dp_prices = Some(table.prices.iter().map(|row| row[k]).collect());
            }
            _ => {
                let agents = priced()?;
                let (policy, _) = correlation_gap_policy(&agents, env)?;
                let o = opp_evaluate(
                    &agents,
                    env,
                    &policy.quantiles,
                    OrderMode::Auto,
                    cfg.samples,
                    cfg.seed,
                )?;
                report.mode = "exact-worst-order".into();
                report.value = o.exact;
                report.quantiles = Some(policy.quantiles);
                report.order = Some(o.order);
                report.result = Some(o.result);
            }
        },
        Mechanism::Mpm => {
            let r = mpm_run(&priced()?, env, cfg.samples, cfg.seed)?;
            report.value = r.mean;
            report.std_err = r.std_err;
            report.result = Some(r);
        }
        Mechanism::Ap => {
            let mut prices: Vec<f64> = models
                .iter()
                .flat_map(|m| default_price_grid(m, cfg.grid.prices.min(AP_PRICES)))
                .collect();
            prices.sort_by(f64::total_cmp);
            prices.dedup();
            let ap = best_anonymous_price(
                &models,
                cfg.objective,
                env,
                &prices,
                OrderMode::Auto,
                cfg.seed,
            )?;
            report.mode = "exact-anonymous".into();
            report.value = ap.value;
            report.price = Some(ap.price);
            report.order = Some(ap.order);
        }
    }
    report.ratio = ratio(ear, report.value);
    let mut out = Outcome::default();
    out.line(format!(
        "{mechanism} ({}): value = {:.6} (se {:.2e}), EAR = {:.6}, ratio = {:.4}",
        report.mode, report.value, report.std_err, report.ear, report.ratio
    ));
    out.add_json(&format!("simulate_{mechanism}.json"), &report)?;
    Ok(out)
}
