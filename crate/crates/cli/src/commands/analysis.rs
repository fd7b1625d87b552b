use serde::Serialize;

use pricing_lab::curves::{payoff_at_quantile, quantile_grid, ConcaveCurve, Objective};
use pricing_lab::dist::{AgentModel, ParametricDist};
use pricing_lab::exante::{closeness_with, exante_curve_on, type_grid, ClosenessReport};

use super::{effective, merged_grid, points_csv, Outcome, Overrides};
use crate::config::LoadedConfig;
use crate::error::CliError;

/// Price-posting curve and its hull for the agent the ex ante program sees.
pub(crate) struct CurveSet {
    pub grid: Vec<f64>,
    pub price_posting: Vec<(f64, f64)>,
    pub hull: Vec<(f64, f64)>,
    pub exante: Vec<(f64, f64)>,
}

/// The agent with both marginals replaced by their `atoms`-point type grid.
pub(crate) fn discretized(model: &AgentModel, atoms: usize) -> Result<AgentModel, CliError> {
    let (values, budgets) = type_grid(model, atoms)?;
    Ok(AgentModel {
        value: ParametricDist::Explicit(values),
        budget: ParametricDist::Explicit(budgets),
        utility: model.utility,
    })
}

/// Raw price-posting points on `grid` and the hull of the curve sampled at
/// resolution `fine` (plus the grid itself), evaluated on `grid`.
pub(crate) fn price_posting_on(
    model: &AgentModel,
    objective: Objective,
    grid: &[f64],
    fine: usize,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), CliError> {
    let at = |q: f64| payoff_at_quantile(model, q, objective).map(|v| (q, v));
    let raw = grid.iter().map(|&q| at(q)).collect::<Result<Vec<_>, _>>()?;
    let dense = merged_grid(fine, grid)
        .into_iter()
        .map(at)
        .collect::<Result<Vec<_>, _>>()?;
    let hull = ConcaveCurve::from_points(&dense);
    Ok((raw, grid.iter().map(|&q| (q, hull.eval(q))).collect()))
}

pub(crate) fn curve_set(
    model: &AgentModel,
    objective: Objective,
    quantiles: usize,
    atoms: usize,
    fine: usize,
) -> Result<CurveSet, CliError> {
    let disc = discretized(model, atoms)?;
    let grid = quantile_grid(quantiles);
    let (price_posting, hull) = price_posting_on(&disc, objective, &grid, fine)?;
    let (ParametricDist::Explicit(v), ParametricDist::Explicit(b)) = (&disc.value, &disc.budget)
    else {
        unreachable!("discretized marginals are explicit")
    };
    let (curve, _) = exante_curve_on(v, b, objective, quantiles)?;
    Ok(CurveSet {
        grid,
        price_posting,
        hull,
        exante: curve.points(),
    })
}

fn max_of(points: &[(f64, f64)]) -> f64 {
    points.iter().map(|p| p.1).fold(0.0, f64::max)
}

#[derive(Debug, Serialize)]
struct CurveEntry {
    agent: usize,
    price_posting_max: f64,
    hull_max: f64,
    exante_max: f64,
    /// Largest `|A(q) - Pbar(q)|` over the grid.
    max_abs_gap: f64,
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    config_sha256: String,
    objective: Objective,
    grid: usize,
    atoms: usize,
    agents: Vec<CurveEntry>,
}

/// Writes `agent{i}_{price_posting,hull,exante}.csv` for each agent listed in
/// the config, all on the grid `j / grid.quantiles`.
pub fn cmd_curve(loaded: &LoadedConfig, overrides: &Overrides) -> Result<Outcome, CliError> {
    let (cfg, digest) = effective(loaded, overrides)?;
    let mut out = Outcome::default();
    let mut entries = Vec::new();
    for (i, spec) in cfg.agents.iter().enumerate() {
        let model = spec.to_model()?;
        let set = curve_set(
            &model,
            cfg.objective,
            cfg.grid.quantiles,
            cfg.grid.atoms,
            cfg.grid.curve,
        )?;
        out.add_csv(&format!("agent{i}_price_posting.csv"), &digest, &points_csv(&set.price_posting));
        out.add_csv(&format!("agent{i}_hull.csv"), &digest, &points_csv(&set.hull));
        out.add_csv(&format!("agent{i}_exante.csv"), &digest, &points_csv(&set.exante));
        let gap = set
            .exante
            .iter()
            .zip(&set.hull)
            .map(|(a, h)| (a.1 - h.1).abs())
            .fold(0.0, f64::max);
        let entry = CurveEntry {
            agent: i,
            price_posting_max: max_of(&set.price_posting),
            hull_max: max_of(&set.hull),
            exante_max: max_of(&set.exante),
            max_abs_gap: gap,
        };
        out.line(format!(
            "agent {i}: max P = {:.6}, max hull = {:.6}, max A = {:.6}, max |A - hull| = {:.2e} ({} grid points)",
            entry.price_posting_max,
            entry.hull_max,
            entry.exante_max,
            gap,
            set.grid.len()
        ));
        entries.push(entry);
    }
    out.add_json(
        "curve.json",
        &CurveSummary {
            config_sha256: digest,
            objective: cfg.objective,
            grid: cfg.grid.quantiles,
            atoms: cfg.grid.atoms,
            agents: entries,
        },
    )?;
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ClosenessOutput {
    config_sha256: String,
    objective: Objective,
    violated: bool,
    agents: Vec<ClosenessReport>,
}

/// Closeness of each listed agent; a measured ratio above the guaranteed
/// bound plus slack is reported as a regression.
pub fn cmd_closeness(loaded: &LoadedConfig, overrides: &Overrides) -> Result<Outcome, CliError> {
    let (cfg, digest) = effective(loaded, overrides)?;
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    let mut broken = Vec::new();
    for (i, spec) in cfg.agents.iter().enumerate() {
        let model = spec.to_model()?;
        let (report, _) = closeness_with(&model, cfg.objective, cfg.grid.quantiles, cfg.grid.atoms)?;
        out.line(format!(
            "agent {i}: zeta = {:.6} (bound {} + slack {}){}",
            report.zeta,
            report.bound,
            report.slack,
            if report.violated { "  VIOLATED" } else { "" }
        ));
        if report.violated {
            broken.push(format!(
                "agent {i}: zeta {} exceeds {} + {}",
                report.zeta, report.bound, report.slack
            ));
        }
        reports.push(report);
    }
    out.add_json(
        "closeness.json",
        &ClosenessOutput {
            config_sha256: digest,
            objective: cfg.objective,
            violated: !broken.is_empty(),
            agents: reports,
        },
    )?;
    if !broken.is_empty() {
        out.regression = Some(broken.join("; "));
    }
    Ok(out)
}
