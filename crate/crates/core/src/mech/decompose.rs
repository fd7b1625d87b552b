use serde::{Deserialize, Serialize};

use crate::curves::{clearing, payoff_at_quantile, q_max, Objective};
use crate::dist::{AgentModel, ParametricDist, Utility};
use crate::error::{Error, Result};
use crate::exante::{AllocationPaymentFunction, LpMechanism};

/// Relative allowance for the grid error of the price-posting benchmark.
pub const GRID_SLACK: f64 = 0.01;
const SUM_TOL: f64 = 1e-6;
const RUNMAX_GRID: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSplit {
    pub q: f64,
    pub price: f64,
    pub total: f64,
    pub ex1: f64,
    pub ex2: f64,
    /// Welfare of posting the market clearing price.
    pub bound: f64,
    /// Largest excess of a term over its bound (negative when all hold).
    pub excess: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueSplit {
    pub q: f64,
    pub price: f64,
    pub expected_budget: f64,
    pub kappa: f64,
    pub total: f64,
    /// Capped at the market clearing slope.
    pub ex1: f64,
    /// Tail beyond both split points.
    pub ex2: f64,
    /// Middle part between the two split points.
    pub ex3: f64,
    /// `P(q)` on the mechanism's type grid.
    pub p_q: f64,
    /// `max_{q' <= q} P(q')`.
    pub p_runmax: f64,
    /// True when the market clearing price is at least the expected budget.
    pub high_price: bool,
    pub excess: f64,
    pub holds: bool,
}

fn grid_model(mech: &LpMechanism) -> AgentModel {
    AgentModel {
        value: ParametricDist::Explicit(mech.values.clone()),
        budget: ParametricDist::Explicit(mech.budgets.clone()),
        utility: Utility::PrivateBudget,
    }
}

fn check_taus(mech: &LpMechanism, taus: &[AllocationPaymentFunction]) -> Result<()> {
    if taus.len() != mech.budgets.len() {
        return Err(Error::Param(format!(
            "{} payment functions for {} budget levels",
            taus.len(),
            mech.budgets.len()
        )));
    }
    taus.iter().try_for_each(AllocationPaymentFunction::validate)
}

/// `tau` restricted to allocations in `[from, to]` and shifted to start at
/// the origin.
fn window(tau: &AllocationPaymentFunction, from: f64, to: f64) -> AllocationPaymentFunction {
    let base = tau.eval(from);
    let mut menu: Vec<(f64, f64)> = tau
        .points
        .iter()
        .filter(|p| p.0 > from && p.0 < to)
        .map(|&(x, p)| (x - from, p - base))
        .collect();
    if to > from {
        menu.push((to - from, tau.eval(to) - base));
    }
    AllocationPaymentFunction::from_points(tau.budget, &menu)
}

/// Utility-maximizing choice of `(v, b)` under `tau`, resolving ties toward
/// the allocation `hint` the type holds in the split mechanism.
fn choose_near(tau: &AllocationPaymentFunction, v: f64, b: f64, hint: f64) -> (f64, f64) {
    let hint = hint.clamp(0.0, tau.max_allocation());
    let mut best = (hint, tau.eval(hint));
    let mut best_u = if best.1 <= b + 1e-9 {
        v * best.0 - best.1
    } else {
        best = (0.0, 0.0);
        0.0
    };
    for &(x, p) in &tau.points {
        if p > b + 1e-9 {
            continue;
        }
        let u = v * x - p;
        if u > best_u + 1e-9 * (1.0 + u.abs()) {
            best = (x, p);
            best_u = u;
        }
    }
    best
}

/// Payoff of the types' choices under one function per budget level, each
/// type starting from its share `part(x)` of the ex ante allocation.
fn menu_payoff(
    mech: &LpMechanism,
    taus: &[AllocationPaymentFunction],
    objective: Objective,
    part: impl Fn(usize, f64) -> f64,
) -> f64 {
    let (v, b) = (mech.values.support(), mech.budgets.support());
    let mut total = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            let t = mech.index(i, j);
            let w = mech.values.probs()[i] * mech.budgets.probs()[j];
            let (x, p) = choose_near(&taus[j], vi, bj, part(j, mech.x[t]));
            total += w * match objective {
                Objective::Revenue => p,
                Objective::Welfare => vi * x,
            };
        }
    }
    total
}

fn lp_payoff(mech: &LpMechanism, objective: Objective) -> f64 {
    let (v, mb) = (mech.values.support(), mech.budgets.len());
    mech.weights()
        .enumerate()
        .map(|(t, w)| match objective {
            Objective::Revenue => w * mech.p[t],
            Objective::Welfare => w * v[t / mb] * mech.x[t],
        })
        .sum()
}

fn clearing_at(model: &AgentModel, q: f64) -> Result<(f64, f64)> {
    let qc = q.min(q_max(model));
    Ok((clearing(model, qc)?.price, qc))
}

/// Splits the ex ante mechanism at `x*_b`, the last allocation whose
/// marginal payment is at most the market clearing price, and checks that
/// the sum covers the mechanism's welfare and each part is at most the
/// welfare of posting that price.
pub fn decompose_welfare(
    mech: &LpMechanism,
    taus: &[AllocationPaymentFunction],
) -> Result<WelfareSplit> {
    check_taus(mech, taus)?;
    let model = grid_model(mech);
    let (price, qc) = clearing_at(&model, mech.q)?;
    let split: Vec<f64> = taus.iter().map(|t| t.x_at_slope(price)).collect();
    let low: Vec<_> = taus.iter().zip(&split).map(|(t, &s)| window(t, 0.0, s)).collect();
    let high: Vec<_> = taus
        .iter()
        .zip(&split)
        .map(|(t, &s)| window(t, s, t.max_allocation()))
        .collect();
    let total = lp_payoff(mech, Objective::Welfare);
    let ex1 = menu_payoff(mech, &low, Objective::Welfare, |j, x| x.min(split[j]));
    let ex2 = menu_payoff(mech, &high, Objective::Welfare, |j, x| (x - split[j]).max(0.0));
    let bound = payoff_at_quantile(&model, qc, Objective::Welfare)?;
    let allow = bound * (1.0 + GRID_SLACK) + SUM_TOL;
    let excess = (ex1 - bound).max(ex2 - bound).max(total - ex1 - ex2);
    let holds = total <= ex1 + ex2 + SUM_TOL && ex1 <= allow && ex2 <= allow;
    Ok(WelfareSplit {
        q: mech.q,
        price,
        total,
        ex1,
        ex2,
        bound,
        excess,
        holds,
    })
}

/// Three-way split at `x*_b` and `x#_b` (the last allocation whose marginal
/// payment is at most the expected budget), checked against the
/// price-posting revenue bounds for budget parameter `kappa`.
pub fn decompose_revenue(
    mech: &LpMechanism,
    taus: &[AllocationPaymentFunction],
) -> Result<RevenueSplit> {
    check_taus(mech, taus)?;
    let model = grid_model(mech);
    let (price, qc) = clearing_at(&model, mech.q)?;
    let b_star = mech.budgets.mean();
    let kappa = 1.0 / mech.budgets.tail_ge(b_star - 1e-12 * b_star.max(1.0));
    let mut cuts = Vec::with_capacity(taus.len());
    let mut low = Vec::with_capacity(taus.len());
    let mut mid = Vec::with_capacity(taus.len());
    let mut high = Vec::with_capacity(taus.len());
    for t in taus {
        let xs = t.x_at_slope(price);
        let hi = xs.max(t.x_at_slope(b_star));
        cuts.push((xs, hi));
        low.push(window(t, 0.0, xs));
        mid.push(window(t, xs, hi));
        high.push(window(t, hi, t.max_allocation()));
    }
    let total = lp_payoff(mech, Objective::Revenue);
    let ex1 = menu_payoff(mech, &low, Objective::Revenue, |j, x| x.min(cuts[j].0));
    let ex3 = menu_payoff(mech, &mid, Objective::Revenue, |j, x| {
        x.clamp(cuts[j].0, cuts[j].1) - cuts[j].0
    });
    let ex2 = menu_payoff(mech, &high, Objective::Revenue, |j, x| (x - cuts[j].1).max(0.0));
    let p_q = payoff_at_quantile(&model, qc, Objective::Revenue)?;
    let mut p_runmax = p_q;
    for j in 0..=RUNMAX_GRID {
        let q = qc * j as f64 / RUNMAX_GRID as f64;
        p_runmax = p_runmax.max(payoff_at_quantile(&model, q, Objective::Revenue)?);
    }
    let c = 1.0 + kappa - 1.0 / kappa;
    let slack = |bound: f64| bound * GRID_SLACK + SUM_TOL;
    let high_price = price >= b_star;
    let mut excess = total - ex1 - ex2 - ex3;
    let mut holds = excess <= SUM_TOL;
    if high_price {
        let bound = (1.0 + c) * p_q;
        excess = excess.max(total - bound);
        holds &= total <= bound + slack(bound);
    } else {
        for (term, bound) in [
            (ex1, p_q),
            (ex2, c * p_runmax),
            (ex3, (2.0 * kappa - 1.0) * p_runmax),
        ] {
            excess = excess.max(term - bound);
            holds &= term <= bound + slack(bound);
        }
    }
    Ok(RevenueSplit {
        q: mech.q,
        price,
        expected_budget: b_star,
        kappa,
        total,
        ex1,
        ex2,
        ex3,
        p_q,
        p_runmax,
        high_price,
        excess,
        holds,
    })
}
