use serde::{Deserialize, Serialize};

use crate::curves::{allocation_ge, price_posting_payoff, ConcaveCurve, Objective};
use crate::dist::AgentModel;
use crate::error::{Error, Result};

/// Number of grid prices used when the caller gives none.
pub const DEFAULT_PRICE_GRID: usize = 20_000;

/// Backward-induction values `V(i, u)` for `i` agents already passed and `u`
/// units left, with the maximizing price of each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpTable {
    pub n: usize,
    pub k: usize,
    /// `(n + 1) x (k + 1)` values.
    pub values: Vec<Vec<f64>>,
    /// `n x (k + 1)` prices; the entry for `u = 0` is unused.
    pub prices: Vec<Vec<f64>>,
}

impl DpTable {
    pub fn value(&self) -> f64 {
        self.values[0][self.k]
    }
}

/// `size` equally spaced prices on `(0, v_max]` plus the value atoms of
/// explicit distributions.
pub fn default_price_grid(agent: &AgentModel, size: usize) -> Vec<f64> {
    let vmax = agent.value.max_value();
    let mut grid: Vec<f64> = (1..=size).map(|j| vmax * j as f64 / size as f64).collect();
    if let crate::dist::ParametricDist::Explicit(d) = &agent.value {
        grid.extend(d.support().iter().copied().filter(|&v| v > 0.0));
    }
    if let Some(v) = agent.value.is_point_mass() {
        grid.push(v);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Optimal adaptive sequential pricing for `n` i.i.d. agents and `k` units.
pub fn opp_iid_dp(
    agent: &AgentModel,
    n: usize,
    k: usize,
    objective: Objective,
    prices: &[f64],
) -> Result<DpTable> {
    if prices.is_empty() {
        return Err(Error::Param("price grid is empty".into()));
    }
    if n == 0 {
        return Err(Error::Param("at least one agent is required".into()));
    }
    let menu = prices
        .iter()
        .map(|&p| Ok((p, price_posting_payoff(agent, p, objective)?, allocation_ge(agent, p))))
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![0.0; k + 1]; n + 1];
    let mut best_prices = vec![vec![0.0; k + 1]; n];
    for i in (0..n).rev() {
        for u in 1..=k {
            let (keep, spend) = (values[i + 1][u], values[i + 1][u - 1]);
            let mut best = (f64::NEG_INFINITY, 0.0);
            for &(p, pay, a) in &menu {
                let v = pay + a * spend + (1.0 - a) * keep;
                if v > best.0 {
                    best = (v, p);
                }
            }
            values[i][u] = best.0;
            best_prices[i][u] = best.1;
        }
    }
    Ok(DpTable {
        n,
        k,
        values,
        prices: best_prices,
    })
}

/// Ex ante relaxation of `n` i.i.d. agents with `k` units: `n` times the
/// best hull value at quantiles up to `k / n`.
pub fn iid_ear(hull: &ConcaveCurve, n: usize, k: usize) -> f64 {
    let q = (k as f64 / n as f64).min(1.0);
    n as f64 * hull.runmax(q)
}
