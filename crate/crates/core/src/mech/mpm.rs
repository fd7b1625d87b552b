use rand::Rng;

use crate::curves::{allocation_ge, allocation_gt, Objective};
use crate::envs::{greedy_max_weight, Environment};
use crate::error::{Error, Result};
use crate::sim::{run, SimResult};

use super::{common_objective, units, PricedAgent};

/// Quantile of type `(v, b)` drawn from `H(q) = x^q(v, b)` with uniform `u`;
/// `None` when the type never buys.
fn draw_quantile(a: &PricedAgent, v: f64, b: f64, u: f64) -> Option<f64> {
    if v <= 0.0 || b <= 0.0 {
        return None;
    }
    let budget_price = if u > 0.0 { b / u } else { f64::INFINITY };
    let q = if budget_price < v {
        allocation_gt(&a.agent, budget_price)
    } else {
        // indifferent types at an atom are split by the tie-break
        let lo = allocation_gt(&a.agent, v);
        let hi = allocation_ge(&a.agent, v);
        lo + (u / (b / v).min(1.0)).min(1.0) * (hi - lo)
    };
    (q <= a.q_max() + 1e-12).then_some(q)
}

fn wins_kunit(weights: &[f64], i: usize, w: f64, k: usize) -> bool {
    if w <= 0.0 {
        return false;
    }
    let ahead = weights
        .iter()
        .enumerate()
        .filter(|&(j, &x)| j != i && (x > w || (x == w && j < i)))
        .count();
    ahead < k
}

/// Marginal payoff mechanism: each type draws a quantile from `H`, weights
/// are ironed marginal payoffs, winners form the max-weight feasible set,
/// and each agent is charged `p(q_hat) x^{q_hat}(t)` for its threshold
/// `q_hat`. Payoffs and serve probabilities are credited in expectation over
/// the agent's own quantile given the others'.
pub fn mpm_run(
    agents: &[PricedAgent],
    env: &Environment,
    samples: u64,
    seed: u64,
) -> Result<SimResult> {
    let objective = common_objective(agents)?;
    if samples == 0 {
        return Err(Error::Param("at least one sample is required".into()));
    }
    env.validate(agents.len())?;
    let n = agents.len();
    let k = units(env);
    let tally = run(seed, samples, n, |rng, t| {
        let mut types = Vec::with_capacity(n);
        let mut weights = vec![0.0; n];
        for (i, a) in agents.iter().enumerate() {
            let v = a.agent.value.sample(rng);
            let b = a.agent.budget.sample(rng);
            let u: f64 = rng.random();
            if let Some(q) = draw_quantile(a, v, b, u) {
                weights[i] = a.virtual_value(q);
            }
            types.push((v, b));
        }
        let mut payoff = 0.0;
        let mut trial = weights.clone();
        for (i, a) in agents.iter().enumerate() {
            let segs = a.segments();
            let mut wins = |w: f64| match k {
                Some(k) => wins_kunit(&weights, i, w, k),
                None => {
                    trial[i] = w;
                    let won = greedy_max_weight(env, &trial).contains(&i);
                    trial[i] = weights[i];
                    won
                }
            };
            // slopes are nonincreasing, so winning segments form a prefix
            let (mut lo, mut hi) = (0usize, segs.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                if wins(segs[mid].2) {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            if lo == 0 {
                continue;
            }
            let c = a.segment_clearing(lo - 1);
            let (v, b) = types[i];
            let x = c.lottery(v, b);
            t.served[i] += x;
            payoff += match objective {
                Objective::Revenue => c.price * x,
                Objective::Welfare => v * x,
            };
        }
        t.record(payoff);
    });
    Ok(SimResult::from_tally(objective, &tally, seed))
}
