use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{allocation_ge, price_posting_payoff, Objective};
use crate::dist::AgentModel;
use crate::envs::{ear_optimize, greedy_max_weight, EarSolution, Environment};
use crate::error::{Error, Result};
use crate::sim::{run, SimResult};

use super::{common_objective, units, Offer, PricedAgent, SppPolicy};

const MAX_EXACT_AGENTS: usize = 63;
const MAX_STATES: usize = 1 << 20;
const EXHAUSTIVE_ORDERS: usize = 7;
const RANDOM_ORDERS: usize = 200;
// stream reserved for drawing adversarial orders
const ORDER_STREAM: u64 = u64::MAX;

/// Which orders the adversary is allowed to try.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderMode {
    /// Every permutation up to 7 agents, sampled orders beyond.
    Auto,
    AllPermutations,
    /// Random permutations plus the two orders sorted by expected payoff.
    RandomOrders { count: usize },
}

/// Worst order found for an oblivious posted pricing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OppOutcome {
    pub order: Vec<usize>,
    pub exact: f64,
    pub orders_evaluated: usize,
    /// False when only a sample of orders was tried, so `exact` is an upper
    /// bound on the adversarial payoff.
    pub exhaustive: bool,
    pub result: SimResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApOutcome {
    pub price: f64,
    /// Payoff under the worst evaluated order.
    pub value: f64,
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApCounterexample {
    pub eps: f64,
    pub optimal: f64,
    pub best_anonymous: ApOutcome,
    pub ratio: f64,
}

fn members(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Exact payoff of offering agents in `order`, agent `i` contributing
/// `pay[i]` when offered and joining the served set with probability
/// `alloc[i]`. Returns the payoff and each agent's offer probability.
pub fn sequential_exact(
    env: &Environment,
    order: &[usize],
    pay: &[f64],
    alloc: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = pay.len();
    if n > MAX_EXACT_AGENTS || alloc.len() != n {
        return Err(Error::Size(format!(
            "exact evaluation takes at most {MAX_EXACT_AGENTS} agents with matching inputs"
        )));
    }
    let k = units(env);
    // k-unit feasibility depends on the count alone
    let canon = |mask: u64| match k {
        Some(_) => (1u64 << mask.count_ones()) - 1,
        None => mask,
    };
    let mut states: BTreeMap<u64, f64> = BTreeMap::new();
    states.insert(0, 1.0);
    let mut offered = vec![0.0; n];
    let mut value = 0.0;
    for &i in order {
        let a = alloc[i].clamp(0.0, 1.0);
        let mut next: BTreeMap<u64, f64> = BTreeMap::new();
        for (&mask, &pr) in &states {
            let fits = match k {
                Some(k) => (mask.count_ones() as usize) < k,
                None => {
                    let mut set = members(mask);
                    set.push(i);
                    env.is_feasible(&set)
                }
            };
            if !fits {
                *next.entry(mask).or_insert(0.0) += pr;
                continue;
            }
            offered[i] += pr;
            value += pr * pay[i];
            if a > 0.0 {
                *next.entry(canon(mask | 1 << i)).or_insert(0.0) += pr * a;
            }
            if a < 1.0 {
                *next.entry(mask).or_insert(0.0) += pr * (1.0 - a);
            }
        }
        if next.len() > MAX_STATES {
            return Err(Error::Size("too many served-set states".into()));
        }
        states = next;
    }
    Ok((value, offered))
}

/// Monte Carlo run of a sequential pricing with fixed offers: an agent is
/// offered iff serving her keeps the served set feasible, buys the lottery
/// `min(1, b/p) 1{v >= p}` at the drawn clearing offer, pays `p` per unit
/// and is served with the lottery's probability.
pub fn simulate_offers(
    agents: &[AgentModel],
    objective: Objective,
    env: &Environment,
    order: &[usize],
    offers: &[Offer],
    samples: u64,
    seed: u64,
) -> Result<SimResult> {
    if samples == 0 {
        return Err(Error::Param("at least one sample is required".into()));
    }
    if offers.len() != agents.len() {
        return Err(Error::Param("one offer per agent is required".into()));
    }
    env.validate(agents.len())?;
    let k = units(env);
    let tally = run(seed, samples, agents.len(), |rng, t| {
        let mut served: Vec<usize> = Vec::new();
        let mut payoff = 0.0;
        for &i in order {
            let fits = match k {
                Some(k) => served.len() < k,
                None => {
                    served.push(i);
                    let ok = env.is_feasible(&served);
                    served.pop();
                    ok
                }
            };
            if !fits {
                continue;
            }
            t.served[i] += 1.0;
            let c = offers[i].draw(rng);
            let v = agents[i].value.sample(rng);
            let b = agents[i].budget.sample(rng);
            let x = c.lottery(v, b);
            payoff += match objective {
                Objective::Revenue => c.price * x,
                Objective::Welfare => v * x,
            };
            let u: f64 = rng.random();
            if u < x {
                served.push(i);
            }
        }
        t.record(payoff);
    });
    Ok(SimResult::from_tally(objective, &tally, seed))
}

fn policy_offers(agents: &[PricedAgent], quantiles: &[f64]) -> Result<Vec<Offer>> {
    agents
        .iter()
        .zip(quantiles)
        .map(|(a, &q)| a.offer(q))
        .collect()
}

fn models(agents: &[PricedAgent]) -> Vec<AgentModel> {
    agents.iter().map(|a| a.agent.clone()).collect()
}

pub fn spp_simulate(
    agents: &[PricedAgent],
    env: &Environment,
    policy: &SppPolicy,
    samples: u64,
    seed: u64,
) -> Result<SimResult> {
    let objective = common_objective(agents)?;
    policy.validate(agents.len())?;
    let offers = policy_offers(agents, &policy.quantiles)?;
    simulate_offers(
        &models(agents),
        objective,
        env,
        &policy.order,
        &offers,
        samples,
        seed,
    )
}

/// Quantiles from the ex ante relaxation over the agents' hulls, offered in
/// order of nonincreasing hull value.
pub fn correlation_gap_policy(
    agents: &[PricedAgent],
    env: &Environment,
) -> Result<(SppPolicy, EarSolution)> {
    common_objective(agents)?;
    env.validate(agents.len())?;
    let hulls: Vec<_> = agents.iter().map(|a| a.hull.clone()).collect();
    let ear = ear_optimize(&hulls, env)?;
    let worth: Vec<f64> = agents
        .iter()
        .zip(&ear.profile)
        .map(|(a, &q)| a.hull.eval(q))
        .collect();
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&a, &b| worth[b].total_cmp(&worth[a]).then(a.cmp(&b)));
    let policy = SppPolicy::new(order, ear.profile.clone())?;
    Ok((policy, ear))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&x| x > p[i]).unwrap_or(i + 1);
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

fn candidate_orders(n: usize, mode: OrderMode, pay: &[f64], seed: u64) -> (Vec<Vec<usize>>, bool) {
    let exhaustive = match mode {
        OrderMode::Auto => n <= EXHAUSTIVE_ORDERS,
        OrderMode::AllPermutations => true,
        OrderMode::RandomOrders { .. } => false,
    };
    let mut orders = Vec::new();
    if exhaustive {
        let mut p: Vec<usize> = (0..n).collect();
        loop {
            orders.push(p.clone());
            if !next_permutation(&mut p) {
                break;
            }
        }
        return (orders, true);
    }
    let count = match mode {
        OrderMode::RandomOrders { count } => count,
        _ => RANDOM_ORDERS,
    };
    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&a, &b| pay[b].total_cmp(&pay[a]).then(a.cmp(&b)));
    let asc: Vec<usize> = desc.iter().rev().copied().collect();
    orders.push(desc);
    orders.push(asc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ORDER_STREAM);
    for _ in 0..count {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        orders.push(p);
    }
    (orders, false)
}

/// Minimum exact payoff over the candidate orders, first minimizer kept.
fn worst_order(
    env: &Environment,
    pay: &[f64],
    alloc: &[f64],
    orders: &[Vec<usize>],
) -> Result<(Vec<usize>, f64)> {
    let mut worst: Option<(Vec<usize>, f64)> = None;
    for o in orders {
        let (v, _) = sequential_exact(env, o, pay, alloc)?;
        if worst.as_ref().is_none_or(|w| v < w.1 - 1e-12) {
            worst = Some((o.clone(), v));
        }
    }
    worst.ok_or_else(|| Error::Param("no orders to evaluate".into()))
}

/// Identical agents with identical offers under a symmetric constraint: every
/// order gives the same payoff.
fn symmetric(agents: &[AgentModel], offers: &[Offer], env: &Environment) -> bool {
    units(env).is_some()
        && agents.windows(2).all(|w| w[0] == w[1])
        && offers.windows(2).all(|w| w[0] == w[1])
}

/// Oblivious posted pricing: the adversary picks the order minimizing the
/// exact payoff; the worst order is then simulated.
pub fn opp_evaluate(
    agents: &[PricedAgent],
    env: &Environment,
    quantiles: &[f64],
    mode: OrderMode,
    samples: u64,
    seed: u64,
) -> Result<OppOutcome> {
    let objective = common_objective(agents)?;
    env.validate(agents.len())?;
    SppPolicy::new((0..agents.len()).collect(), quantiles.to_vec())?;
    let offers = policy_offers(agents, quantiles)?;
    let ms = models(agents);
    evaluate_worst(&ms, objective, env, &offers, mode, samples, seed)
}

fn evaluate_worst(
    agents: &[AgentModel],
    objective: Objective,
    env: &Environment,
    offers: &[Offer],
    mode: OrderMode,
    samples: u64,
    seed: u64,
) -> Result<OppOutcome> {
    let n = agents.len();
    let pay: Vec<f64> = agents
        .iter()
        .zip(offers)
        .map(|(a, o)| o.payoff(a, objective))
        .collect();
    let alloc: Vec<f64> = agents.iter().zip(offers).map(|(a, o)| o.allocation(a)).collect();
    let (orders, exhaustive) = if symmetric(agents, offers, env) {
        (vec![(0..n).collect()], true)
    } else {
        candidate_orders(n, mode, &pay, seed)
    };
    let (order, exact) = worst_order(env, &pay, &alloc, &orders)?;
    let result = simulate_offers(agents, objective, env, &order, offers, samples, seed)?;
    Ok(OppOutcome {
        order,
        exact,
        orders_evaluated: orders.len(),
        exhaustive,
        result,
    })
}

/// Worst-order payoff of posting the same per-unit price to every agent.
pub fn anonymous_price_value(
    agents: &[AgentModel],
    objective: Objective,
    env: &Environment,
    price: f64,
    mode: OrderMode,
    seed: u64,
) -> Result<(f64, Vec<usize>)> {
    let pay = agents
        .iter()
        .map(|a| price_posting_payoff(a, price, objective))
        .collect::<Result<Vec<f64>>>()?;
    let alloc: Vec<f64> = agents.iter().map(|a| allocation_ge(a, price)).collect();
    let offers = vec![Offer::price(price); agents.len()];
    let (orders, _) = if symmetric(agents, &offers, env) {
        (vec![(0..agents.len()).collect()], true)
    } else {
        candidate_orders(agents.len(), mode, &pay, seed)
    };
    worst_order(env, &pay, &alloc, &orders).map(|(o, v)| (v, o))
}

/// Anonymous price maximizing the worst-order payoff; ties keep the
/// earlier candidate.
pub fn best_anonymous_price(
    agents: &[AgentModel],
    objective: Objective,
    env: &Environment,
    prices: &[f64],
    mode: OrderMode,
    seed: u64,
) -> Result<ApOutcome> {
    env.validate(agents.len())?;
    let mut best: Option<ApOutcome> = None;
    for &p in prices {
        let (value, order) = anonymous_price_value(agents, objective, env, p, mode, seed)?;
        if best.as_ref().is_none_or(|b| value > b.value + 1e-12) {
            best = Some(ApOutcome {
                price: p,
                value,
                order,
            });
        }
    }
    best.ok_or_else(|| Error::Param("price grid is empty".into()))
}

/// Two point-mass agents, `v1 = 1/eps^2` with budget 1 and `v2 = 1/eps` with
/// budget `1/eps`, one unit: no anonymous price earns more than `2/eps` of
/// welfare against an optimum of `1/eps^2`.
pub fn anonymous_welfare_counterexample(eps: f64) -> Result<ApCounterexample> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Param(format!("eps {eps} must lie in (0, 1]")));
    }
    let (v1, b1, v2, b2) = (1.0 / (eps * eps), 1.0, 1.0 / eps, 1.0 / eps);
    let agents = vec![
        AgentModel::public_budget(crate::dist::ParametricDist::point_mass(v1)?, b1)?,
        AgentModel::public_budget(crate::dist::ParametricDist::point_mass(v2)?, b2)?,
    ];
    let env = Environment::KUnit { k: 1 };
    // log grid from well below every budget to the top value, plus the atoms
    let (lo, hi) = (1e-3 * b1.min(b2), v1);
    let steps = 4000;
    let mut prices: Vec<f64> = (0..=steps)
        .map(|j| lo * (hi / lo).powf(j as f64 / steps as f64))
        .collect();
    prices.extend([b1, b2, v1, v2]);
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    let best = best_anonymous_price(
        &agents,
        Objective::Welfare,
        &env,
        &prices,
        OrderMode::AllPermutations,
        0,
    )?;
    let chosen = greedy_max_weight(&env, &[v1, v2]);
    let optimal: f64 = chosen.iter().map(|&i| [v1, v2][i]).sum();
    Ok(ApCounterexample {
        eps,
        optimal,
        ratio: optimal / best.value,
        best_anonymous: best,
    })
}
