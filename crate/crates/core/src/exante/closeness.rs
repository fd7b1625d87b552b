use serde::{Deserialize, Serialize};

use crate::curves::{payoff_at_quantile, ConcaveCurve, Objective};
use crate::dist::{AgentModel, ParametricDist, Utility};
use crate::error::{Error, Result};

use super::lp::{exante_curve_on, type_grid};
use super::{ExAnteCurve, SolverTag};

/// Default quantile grid of the ex ante curve.
pub const DEFAULT_GRID: usize = 50;
/// Default atoms per continuous marginal in the type grid.
pub const DEFAULT_ATOMS: usize = 50;
/// Resolution of the price-posting curve whose hull forms the denominator.
const PRICE_GRID: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessPoint {
    pub q: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Pbar_runmax")]
    pub pbar_runmax: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub objective: Objective,
    pub zeta: f64,
    /// Same ratio with the raw, unironed curve in the denominator.
    pub zeta_raw: f64,
    /// Ratio against the hull of the undiscretized agent's curve, when the
    /// agent has continuous marginals.
    pub zeta_continuous: Option<f64>,
    pub bound: f64,
    pub slack: f64,
    pub kappa: Option<f64>,
    pub violated: bool,
    pub solver: SolverTag,
    pub per_q: Vec<ClosenessPoint>,
}

/// `1 / Pr[b >= E[b]]`.
pub fn kappa_of(budget: &ParametricDist) -> Result<f64> {
    let mean = budget.mean();
    let pr = budget.tail_ge(mean - 1e-12 * mean.abs().max(1.0));
    if pr <= 0.0 {
        return Err(Error::Degenerate("budget never reaches its mean".into()));
    }
    Ok(1.0 / pr)
}

/// Whether the linear revenue curve of `value` is concave in quantile space.
pub fn is_regular(value: &ParametricDist) -> bool {
    match value {
        ParametricDist::Explicit(d) => {
            // revenue curve is piecewise linear through the atoms' quantiles
            let mut pts = vec![(0.0, 0.0)];
            for &v in d.support().iter().rev() {
                let q = d.tail_ge(v);
                pts.push((q, v * q));
            }
            pts.windows(3).all(|w| {
                let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
                s2 <= s1 + 1e-12
            })
        }
        _ => true,
    }
}

/// Closeness the theory guarantees for this agent and objective, with the
/// grid slack the measurement is allowed.
pub fn theorem_bound(agent: &AgentModel, objective: Objective) -> Result<(f64, f64, Option<f64>)> {
    if objective == Objective::Welfare {
        return Ok((2.0, 0.05, None));
    }
    Ok(match agent.utility {
        Utility::Linear => (1.0, 0.01, None),
        Utility::PublicBudget if is_regular(&agent.value) => (1.0, 0.02, None),
        Utility::PublicBudget => (2.0, 0.05, None),
        Utility::PrivateBudget => {
            let k = kappa_of(&agent.budget)?;
            let small_tail = 1.0 + 3.0 * k - 1.0 / k;
            let bound = if is_regular(&agent.value) {
                small_tail.min(3.0)
            } else {
                small_tail
            };
            (bound, 0.05, Some(k))
        }
    })
}

fn ratio(a: f64, den: f64) -> f64 {
    if a <= 1e-12 {
        1.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        a / den
    }
}

fn price_points(
    agent: &AgentModel,
    objective: Objective,
    extra: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut qs: Vec<f64> = (0..=PRICE_GRID)
        .map(|j| j as f64 / PRICE_GRID as f64)
        .collect();
    qs.extend_from_slice(extra);
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    qs.iter()
        .map(|&q| payoff_at_quantile(agent, q, objective).map(|v| (q, v)))
        .collect()
}

pub fn closeness(agent: &AgentModel, objective: Objective) -> Result<ClosenessReport> {
    closeness_with(agent, objective, DEFAULT_GRID, DEFAULT_ATOMS).map(|r| r.0)
}

/// Closeness of the ex ante curve (relaxed program on an `m`-atom type grid,
/// sampled at `j / grid`) to the ironed price-posting curve of the same
/// discretized agent.
pub fn closeness_with(
    agent: &AgentModel,
    objective: Objective,
    grid: usize,
    m: usize,
) -> Result<(ClosenessReport, ExAnteCurve)> {
    let (values, budgets) = type_grid(agent, m)?;
    let (curve, _) = exante_curve_on(&values, &budgets, objective, grid)?;

    // price posting on the same type grid the program sees
    let model = AgentModel {
        value: ParametricDist::Explicit(values),
        budget: ParametricDist::Explicit(budgets),
        utility: agent.utility,
    };
    let raw = price_points(&model, objective, &curve.grid)?;
    let hull = ConcaveCurve::from_points(&raw);
    let raw_runmax = |q: f64| {
        raw.iter()
            .take_while(|p| p.0 <= q + 1e-12)
            .map(|p| p.1)
            .fold(0.0, f64::max)
    };

    let mut per_q = Vec::with_capacity(curve.grid.len());
    let mut zeta_raw: f64 = 1.0;
    for (&q, &a) in curve.grid.iter().zip(&curve.values) {
        let den = hull.runmax(q);
        per_q.push(ClosenessPoint {
            q,
            a,
            pbar_runmax: den,
            ratio: ratio(a, den),
        });
        zeta_raw = zeta_raw.max(ratio(a, raw_runmax(q)));
    }
    let zeta = per_q.iter().map(|p| p.ratio).fold(1.0, f64::max);
    let continuous = !matches!(agent.value, ParametricDist::Explicit(_))
        || !matches!(agent.budget, ParametricDist::Explicit(_));
    let zeta_continuous = if continuous {
        let hull = ConcaveCurve::from_points(&price_points(agent, objective, &curve.grid)?);
        Some(
            per_q
                .iter()
                .map(|p| ratio(p.a, hull.runmax(p.q)))
                .fold(1.0, f64::max),
        )
    } else {
        None
    };
    let (bound, slack, kappa) = theorem_bound(agent, objective)?;
    let report = ClosenessReport {
        objective,
        zeta,
        zeta_raw,
        zeta_continuous,
        bound,
        slack,
        kappa,
        violated: zeta > bound + slack,
        solver: curve.solver,
        per_q,
    };
    Ok((report, curve))
}
