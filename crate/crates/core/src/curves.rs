//! Price-posting payoff curves in quantile space, their concave hulls and
//! virtual values.

use serde::{Deserialize, Serialize};

use crate::dist::AgentModel;
use crate::error::{Error, Result};

const BISECT_ITERS: usize = 200;
const HULL_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Revenue,
    Welfare,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Revenue => "revenue",
            Objective::Welfare => "welfare",
        })
    }
}

/// `E[min(1, b/p)]`, with the `p -> 0` limit `P[b > 0]`.
fn budget_factor(agent: &AgentModel, p: f64) -> f64 {
    if p <= 0.0 {
        agent.budget.tail_gt(0.0)
    } else {
        (agent.budget.mean_min(p) / p).min(1.0)
    }
}

/// `P[v >= p] * E[min(1, b/p)]`.
pub fn expected_allocation(agent: &AgentModel, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("price {p} must be positive")));
    }
    Ok(allocation_ge(agent, p))
}

/// Allocation at per-unit price `p` when types with value `p` buy.
pub fn allocation_ge(agent: &AgentModel, p: f64) -> f64 {
    (agent.value.tail_ge(p.max(0.0)) * budget_factor(agent, p)).clamp(0.0, 1.0)
}

/// Allocation when types with value exactly `p` decline.
pub fn allocation_gt(agent: &AgentModel, p: f64) -> f64 {
    if p <= 0.0 {
        return allocation_ge(agent, 0.0);
    }
    (agent.value.tail_gt(p) * budget_factor(agent, p)).clamp(0.0, 1.0)
}

fn payoff_ge(agent: &AgentModel, p: f64, objective: Objective) -> f64 {
    match objective {
        Objective::Revenue => agent.value.tail_ge(p) * agent.budget.mean_min(p),
        Objective::Welfare => agent.value.partial_mean_ge(p.max(0.0)) * budget_factor(agent, p),
    }
}

fn payoff_gt(agent: &AgentModel, p: f64, objective: Objective) -> f64 {
    if p <= 0.0 {
        return payoff_ge(agent, 0.0, objective);
    }
    match objective {
        Objective::Revenue => agent.value.tail_gt(p) * agent.budget.mean_min(p),
        Objective::Welfare => agent.value.partial_mean_gt(p) * budget_factor(agent, p),
    }
}

/// Revenue `P[v >= p] E[min(p, b)]` or welfare `E[v 1{v >= p}] E[min(1, b/p)]`.
/// At `p = 0` the limit value is returned.
pub fn price_posting_payoff(agent: &AgentModel, p: f64, objective: Objective) -> Result<f64> {
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::Domain(format!("price {p} must be nonnegative")));
    }
    Ok(payoff_ge(agent, p, objective))
}

/// Largest reachable sale probability, attained as the price tends to zero.
pub fn q_max(agent: &AgentModel) -> f64 {
    agent.budget.tail_gt(0.0)
}

/// A per-unit price together with the acceptance probability of types whose
/// value equals the price, so that the allocation hits the target exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketClearing {
    pub price: f64,
    pub atom_accept: f64,
}

impl MarketClearing {
    pub fn allocation(&self, agent: &AgentModel) -> f64 {
        let hi = allocation_ge(agent, self.price);
        let lo = allocation_gt(agent, self.price);
        lo + self.atom_accept * (hi - lo)
    }

    pub fn payoff(&self, agent: &AgentModel, objective: Objective) -> f64 {
        let hi = payoff_ge(agent, self.price, objective);
        let lo = payoff_gt(agent, self.price, objective);
        lo + self.atom_accept * (hi - lo)
    }

    /// Expected lottery bought by type `(v, b)`, averaging over the atom tie-break.
    pub fn lottery(&self, v: f64, b: f64) -> f64 {
        let buy = if v > self.price {
            1.0
        } else if v == self.price {
            self.atom_accept
        } else {
            0.0
        };
        if buy == 0.0 {
            return 0.0;
        }
        let x = if self.price <= 0.0 {
            f64::from(b > 0.0)
        } else {
            (b / self.price).min(1.0)
        };
        buy * x
    }
}

/// Price and tie-break probability selling with probability exactly `q`.
pub fn clearing(agent: &AgentModel, q: f64) -> Result<MarketClearing> {
    let qm = q_max(agent);
    if !(0.0..=qm + 1e-12).contains(&q) {
        return Err(Error::InfeasibleQuantile { q, q_max: qm });
    }
    let vmax = agent.value.max_value();
    if q == 0.0 {
        return Ok(MarketClearing {
            price: vmax,
            atom_accept: 0.0,
        });
    }
    let (mut lo, mut hi) = (0.0, vmax * (1.0 + 1e-12) + 1e-300);
    for _ in 0..BISECT_ITERS {
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if allocation_ge(agent, mid) >= q - 1e-12 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let price = agent.value.atom_in(lo, hi).unwrap_or(lo);
    let full = allocation_ge(agent, price);
    let strict = allocation_gt(agent, price);
    let atom_accept = if full - strict > 1e-15 {
        ((q - strict) / (full - strict)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(MarketClearing { price, atom_accept })
}

pub fn market_clearing_price(agent: &AgentModel, q: f64) -> Result<f64> {
    clearing(agent, q).map(|c| c.price)
}

/// Payoff of the price-posting mechanism selling with probability `q`; the
/// curve is flat above the sale ceiling.
pub fn payoff_at_quantile(agent: &AgentModel, q: f64, objective: Objective) -> Result<f64> {
    if q <= 0.0 {
        return Ok(0.0);
    }
    let c = clearing(agent, q.min(q_max(agent)))?;
    Ok(c.payoff(agent, objective).max(0.0))
}

/// Payoffs sampled on the uniform quantile grid `j / m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffCurve {
    pub objective: Objective,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub q_max: f64,
}

pub fn quantile_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|j| j as f64 / m as f64).collect()
}

pub fn price_posting_curve(
    agent: &AgentModel,
    objective: Objective,
    m: usize,
) -> Result<PayoffCurve> {
    if m < 2 {
        return Err(Error::Param(format!("grid size {m} must be at least 2")));
    }
    let grid = quantile_grid(m);
    let values = grid
        .iter()
        .map(|&q| payoff_at_quantile(agent, q, objective))
        .collect::<Result<_>>()?;
    Ok(PayoffCurve {
        objective,
        grid,
        values,
        q_max: q_max(agent),
    })
}

impl PayoffCurve {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.grid
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for (j, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = j;
            }
        }
        self.grid[best]
    }

    pub fn eval(&self, q: f64) -> f64 {
        interpolate(&self.points(), q)
    }

    /// `max_{q' <= q} P(q')` over grid points.
    pub fn runmax(&self, q: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .take_while(|(g, _)| **g <= q + 1e-12)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        points_csv(&self.points())
    }
}

pub(crate) fn points_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("q,payoff\n");
    for (q, v) in points {
        s.push_str(&format!("{q:.11e},{v:.11e}\n"));
    }
    s
}

pub(crate) fn interpolate(points: &[(f64, f64)], q: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    if q <= points[0].0 {
        return points[0].1;
    }
    let i = points.partition_point(|p| p.0 < q);
    if i >= points.len() {
        return points.last().unwrap().1;
    }
    let (q0, v0) = points[i - 1];
    let (q1, v1) = points[i];
    if q1 - q0 <= 0.0 {
        return v1;
    }
    v0 + (v1 - v0) * (q - q0) / (q1 - q0)
}

/// Upper concave envelope of a sampled curve, stored by its breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcaveCurve {
    points: Vec<(f64, f64)>,
}

impl ConcaveCurve {
    /// Hull of arbitrary points sorted by quantile.
    pub fn from_points(points: &[(f64, f64)]) -> ConcaveCurve {
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for p in pts {
            if let Some(last) = hull.last_mut() {
                if last.0 == p.0 {
                    last.1 = last.1.max(p.1);
                    continue;
                }
            }
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                let scale = (p.0 - a.0) * (1.0 + a.1.abs().max(b.1.abs()).max(p.1.abs()));
                if cross >= -HULL_EPS * scale {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        ConcaveCurve { points: hull }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, q: f64) -> f64 {
        interpolate(&self.points, q)
    }

    /// `(q0, q1, slope)` per hull segment, slopes nonincreasing.
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        self.points
            .windows(2)
            .map(|w| (w[0].0, w[1].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
            .collect()
    }

    /// Left derivative; the first slope at `q = 0` and zero past the last breakpoint.
    pub fn derivative(&self, q: f64) -> f64 {
        let segs = self.segments();
        if segs.is_empty() {
            return 0.0;
        }
        if q <= segs[0].0 {
            return segs[0].2;
        }
        match segs.iter().find(|s| q > s.0 && q <= s.1) {
            Some(s) => s.2,
            None => 0.0,
        }
    }

    /// Right derivative, used for marginal increments.
    pub fn right_derivative(&self, q: f64) -> f64 {
        self.segments()
            .iter()
            .find(|s| q >= s.0 && q < s.1)
            .map_or(0.0, |s| s.2)
    }

    pub fn max(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    /// Smallest quantile attaining the maximum.
    pub fn argmax(&self) -> f64 {
        let m = self.max();
        self.points.iter().find(|p| p.1 >= m).map_or(0.0, |p| p.0)
    }

    /// `max_{q' <= q}` of the hull.
    pub fn runmax(&self, q: f64) -> f64 {
        self.eval(q.min(self.argmax()))
    }

    pub fn max_slope(&self) -> f64 {
        self.segments().first().map_or(0.0, |s| s.2.abs())
    }

    /// Largest second difference over consecutive breakpoints.
    pub fn concavity_defect(&self) -> f64 {
        self.segments()
            .windows(2)
            .map(|w| w[1].2 - w[0].2)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter().map(|&q| (q, self.eval(q))).collect()
    }

    pub fn to_csv(&self, grid: &[f64]) -> String {
        points_csv(&self.sample(grid))
    }

    pub fn scaled(&self, c: f64) -> ConcaveCurve {
        ConcaveCurve {
            points: self.points.iter().map(|&(q, v)| (q, v * c)).collect(),
        }
    }
}

pub fn concave_hull(curve: &PayoffCurve) -> ConcaveCurve {
    ConcaveCurve::from_points(&curve.points())
}

pub fn virtual_value(hull: &ConcaveCurve, q: f64) -> f64 {
    hull.derivative(q)
}

/// Hull error bound on the sampled grid: Lipschitz constant times grid step.
pub fn hull_grid_slack(curve: &PayoffCurve) -> f64 {
    let step = curve.grid.get(1).copied().unwrap_or(0.0);
    let lip = curve
        .grid
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(g, v)| ((v[1] - v[0]) / (g[1] - g[0])).abs())
        .fold(0.0, f64::max);
    lip * step
}
