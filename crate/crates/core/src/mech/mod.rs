//! Multi-agent pricing mechanisms in quantile space: sequential, oblivious
//! and anonymous posted pricing, the marginal payoff mechanism, the i.i.d.
//! backward-induction program and the closeness decomposition checks.

mod decompose;
mod dp;
mod mpm;
mod spp;


use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{
    clearing, payoff_at_quantile, q_max, quantile_grid, ConcaveCurve, MarketClearing, Objective,
};
use crate::dist::AgentModel;
use crate::envs::Environment;
use crate::error::{Error, Result};

pub use decompose::{decompose_revenue, decompose_welfare, RevenueSplit, WelfareSplit};
pub use dp::{default_price_grid, iid_ear, opp_iid_dp, DpTable, DEFAULT_PRICE_GRID};
pub use mpm::mpm_run;
pub use spp::{
    anonymous_price_value, anonymous_welfare_counterexample, best_anonymous_price,
    correlation_gap_policy, opp_evaluate, sequential_exact, simulate_offers, spp_simulate,
    ApCounterexample, ApOutcome, OppOutcome, OrderMode,
};

/// Resolution of the price-posting curve behind each agent's hull.
pub const DEFAULT_CURVE_GRID: usize = 1000;

/// Correlation gap of the environment: `e/(e-1)` for matroids, improved to
/// `1/(1 - 1/sqrt(2 pi k))` for `k`-unit when that is smaller.
pub fn gamma(env: &Environment) -> f64 {
    let e = std::f64::consts::E;
    let matroid = e / (e - 1.0);
    match units(env) {
        Some(k) => {
            let yan = 1.0 / (1.0 - 1.0 / (2.0 * std::f64::consts::PI * k as f64).sqrt());
            matroid.min(yan)
        }
        None => matroid,
    }
}

/// Capacity of a `k`-unit environment.
pub(crate) fn units(env: &Environment) -> Option<usize> {
    match env {
        Environment::KUnit { k } | Environment::Uniform { k } => Some(*k),
        _ => None,
    }
}

/// Randomization over market clearing offers, realizing points of the
/// ironed curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub branches: Vec<(f64, MarketClearing)>,
}

impl Offer {
    pub fn single(c: MarketClearing) -> Self {
        Offer {
            branches: vec![(1.0, c)],
        }
    }

    /// Posted per-unit price `p`; types with value exactly `p` buy.
    pub fn price(p: f64) -> Self {
        Self::single(MarketClearing {
            price: p,
            atom_accept: 1.0,
        })
    }

    pub fn payoff(&self, agent: &AgentModel, objective: Objective) -> f64 {
        self.branches
            .iter()
            .map(|(w, c)| w * c.payoff(agent, objective))
            .sum()
    }

    pub fn allocation(&self, agent: &AgentModel) -> f64 {
        self.branches.iter().map(|(w, c)| w * c.allocation(agent)).sum()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &MarketClearing {
        if self.branches.len() == 1 {
            return &self.branches[0].1;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, c) in &self.branches {
            acc += w;
            if u < acc {
                return c;
            }
        }
        &self.branches[self.branches.len() - 1].1
    }
}

/// An agent with its price-posting curve, the hull over reachable quantiles
/// and the market clearing offers at the hull breakpoints.
#[derive(Debug, Clone)]
pub struct PricedAgent {
    pub agent: AgentModel,
    pub objective: Objective,
    pub hull: ConcaveCurve,
    q_max: f64,
    ironed: Vec<(f64, f64)>,
    // positive-slope hull segments (q0, q1, slope), slopes nonincreasing
    segments: Vec<(f64, f64, f64)>,
    // clearing at the right end of each segment
    seg_clearing: Vec<MarketClearing>,
}

impl PricedAgent {
    pub fn new(agent: &AgentModel, objective: Objective) -> Result<Self> {
        Self::with_grid(agent, objective, DEFAULT_CURVE_GRID)
    }

    pub fn with_grid(agent: &AgentModel, objective: Objective, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Param(format!("grid size {m} must be at least 2")));
        }
        agent.validate()?;
        let qm = q_max(agent);
        let mut qs: Vec<f64> = quantile_grid(m).into_iter().filter(|&q| q < qm).collect();
        qs.push(qm);
        let mut points = Vec::with_capacity(qs.len());
        let mut last_price = f64::INFINITY;
        for &q in &qs {
            let c = clearing(agent, q)?;
            if c.price > last_price + 1e-9 * last_price.abs().max(1.0) {
                return Err(Error::OrdinaryGood(format!(
                    "market clearing price rises at quantile {q}"
                )));
            }
            last_price = c.price;
            points.push((q, payoff_at_quantile(agent, q, objective)?));
        }
        let hull = ConcaveCurve::from_points(&points);
        let tol = 1e-9 * hull.max().max(1.0);
        let mut ironed = Vec::new();
        for (q0, q1, _) in hull.segments() {
            let below = points
                .iter()
                .any(|&(q, v)| q > q0 + 1e-12 && q < q1 - 1e-12 && v < hull.eval(q) - tol);
            if below {
                ironed.push((q0, q1));
            }
        }
        let segments: Vec<(f64, f64, f64)> = hull
            .segments()
            .into_iter()
            .filter(|s| s.2 > 0.0 && s.1 > s.0)
            .collect();
        let seg_clearing = segments
            .iter()
            .map(|s| clearing(agent, s.1.min(qm)))
            .collect::<Result<_>>()?;
        Ok(PricedAgent {
            agent: agent.clone(),
            objective,
            hull,
            q_max: qm,
            ironed,
            segments,
            seg_clearing,
        })
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    /// Quantile intervals on which the hull lies strictly above the curve.
    pub fn ironed_intervals(&self) -> &[(f64, f64)] {
        &self.ironed
    }

    /// Offer selling with probability `q` (capped at the ceiling) and paying
    /// the hull value in expectation.
    pub fn offer(&self, q: f64) -> Result<Offer> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("quantile {q} must be nonnegative")));
        }
        let q = q.min(self.q_max);
        if let Some(&(qa, qb)) = self.ironed.iter().find(|&&(a, b)| q > a && q < b) {
            let w = (qb - q) / (qb - qa);
            return Ok(Offer {
                branches: vec![(w, clearing(&self.agent, qa)?), (1.0 - w, clearing(&self.agent, qb)?)],
            });
        }
        Ok(Offer::single(clearing(&self.agent, q)?))
    }

    /// Ironed marginal payoff at `q`: the slope of the positive hull segment
    /// containing it, zero elsewhere.
    pub fn virtual_value(&self, q: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.1 < q);
        match self.segments.get(i) {
            Some(s) if q >= s.0 || i == 0 => s.2,
            _ => 0.0,
        }
    }

    pub(crate) fn segments(&self) -> &[(f64, f64, f64)] {
        &self.segments
    }

    pub(crate) fn segment_clearing(&self, i: usize) -> &MarketClearing {
        &self.seg_clearing[i]
    }
}

/// Ordering and per-agent quantiles of a sequential posted pricing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SppPolicy {
    pub order: Vec<usize>,
    pub quantiles: Vec<f64>,
}

impl SppPolicy {
    pub fn new(order: Vec<usize>, quantiles: Vec<f64>) -> Result<Self> {
        let p = SppPolicy { order, quantiles };
        p.validate(p.quantiles.len())?;
        Ok(p)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.quantiles.len() != n {
            return Err(Error::Param(format!(
                "{} quantiles for {n} agents",
                self.quantiles.len()
            )));
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::Param(format!("quantile {q} outside [0, 1]")));
        }
        let mut seen = vec![false; n];
        for &i in &self.order {
            if i >= n || seen[i] {
                return Err(Error::Param("ordering is not a permutation".into()));
            }
            seen[i] = true;
        }
        if self.order.len() != n {
            return Err(Error::Param("ordering is not a permutation".into()));
        }
        Ok(())
    }
}

fn common_objective(agents: &[PricedAgent]) -> Result<Objective> {
    let first = agents
        .first()
        .ok_or_else(|| Error::Param("at least one agent is required".into()))?;
    if agents.iter().any(|a| a.objective != first.objective) {
        return Err(Error::Param("agents disagree on the objective".into()));
    }
    Ok(first.objective)
}
