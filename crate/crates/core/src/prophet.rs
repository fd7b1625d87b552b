//! Prophet-inequality thresholds, gambler simulations and the correlated
//! value construction whose prophet matches the ex ante relaxation.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{payoff_at_quantile, Objective};
use crate::dist::{AgentModel, ParametricDist};
use crate::envs::{ear_decomposition, ear_optimize, greedy_max_weight, Environment};
use crate::error::{Error, Result};
use crate::mech::PricedAgent;
use crate::sim::{run, SimResult};

/// Default number of `v'` draws behind the adaptive thresholds.
pub const DEFAULT_BATCH: usize = 2000;
const MIN_BATCH: usize = 100;
const FIXED_POINT_TOL: f64 = 1e-9;
// stream reserved for the v' batch
const BATCH_STREAM: u64 = u64::MAX - 1;

/// `E[(v - t)^+]`.
fn excess_mean(d: &ParametricDist, t: f64) -> f64 {
    (d.partial_mean_gt(t) - t * d.tail_gt(t)).max(0.0)
}

/// Solution `b*` of `b = Σ E[(v_i - b/k)^+]` and its residual.
pub fn kunit_fixed_point(values: &[ParametricDist], k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Param("k must be positive".into()));
    }
    let kf = k as f64;
    let gap = |b: f64| b - values.iter().map(|d| excess_mean(d, b / kf)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, values.iter().map(ParametricDist::mean).sum::<f64>());
    if hi <= 0.0 {
        return Ok((0.0, 0.0));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let residual = gap(b).abs();
    if residual > FIXED_POINT_TOL {
        return Err(Error::Numerical(format!("fixed point residual {residual}")));
    }
    Ok((b, residual))
}

/// Anonymous threshold `b*/k` for `k` units.
pub fn kunit_threshold(values: &[ParametricDist], k: usize) -> Result<f64> {
    kunit_fixed_point(values, k).map(|(b, _)| b / k as f64)
}

/// `kθ + Σ E[(v_i - θ)^+]`, an upper bound on the welfare relaxation.
pub fn threshold_upper_bound(values: &[ParametricDist], k: usize, theta: f64) -> f64 {
    k as f64 * theta + values.iter().map(|d| excess_mean(d, theta)).sum::<f64>()
}

/// Ex ante relaxation of linear agents' welfare: the optimal profile and
/// `Σ W_i(q_i)` evaluated on the exact curves.
pub fn welfare_ear(values: &[ParametricDist], env: &Environment) -> Result<(f64, Vec<f64>)> {
    let agents = linear_agents(values)?;
    let hulls = agents
        .iter()
        .map(|a| PricedAgent::new(a, Objective::Welfare).map(|p| p.hull))
        .collect::<Result<Vec<_>>>()?;
    let ear = ear_optimize(&hulls, env)?;
    let value = agents
        .iter()
        .zip(&ear.profile)
        .map(|(a, &q)| payoff_at_quantile(a, q, Objective::Welfare))
        .sum::<Result<f64>>()?;
    Ok((value, ear.profile))
}

fn linear_agents(values: &[ParametricDist]) -> Result<Vec<AgentModel>> {
    values.iter().cloned().map(AgentModel::linear).collect()
}

/// Balanced thresholds for a matroid, estimated on one fixed batch of
/// independent value profiles `v'`.
#[derive(Debug)]
pub struct AdaptiveThresholds {
    env: Environment,
    batch: Vec<Vec<f64>>,
    bases: Vec<Vec<usize>>,
    cache: Mutex<HashMap<(usize, u64), (f64, f64)>>,
}

fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, &i| m | 1 << i)
}

/// Value-maximizing completion of `accepted` inside `base`: greedy over
/// `base \ accepted` by decreasing weight, ties to the lower index.
pub fn remainder(env: &Environment, base: &[usize], accepted: &[usize], w: &[f64]) -> Vec<usize> {
    let mut rest: Vec<usize> = base.iter().copied().filter(|e| !accepted.contains(e)).collect();
    rest.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut set = accepted.to_vec();
    let mut out = Vec::new();
    for e in rest {
        set.push(e);
        if env.is_feasible(&set) {
            out.push(e);
        } else {
            set.pop();
        }
    }
    out.sort_unstable();
    out
}

impl AdaptiveThresholds {
    /// `Σ_{C(A)} v'` per batch draw, with `C(A) = B \ R(A)`.
    fn blocked_values(&self, accepted: &[usize]) -> Vec<f64> {
        self.batch
            .iter()
            .zip(&self.bases)
            .map(|(w, base)| {
                let r = remainder(&self.env, base, accepted, w);
                base.iter().filter(|e| !r.contains(e)).map(|&e| w[e]).sum()
            })
            .collect()
    }

    /// Estimate of `E[Σ_{C(A)} v']`.
    pub fn blocked_value(&self, accepted: &[usize]) -> f64 {
        let c = self.blocked_values(accepted);
        c.iter().sum::<f64>() / c.len() as f64
    }

    /// `θ_i(A)` and its standard error.
    pub fn threshold(&self, i: usize, accepted: &[usize]) -> (f64, f64) {
        let key = (i, mask_of(accepted));
        if let Some(&hit) = self.cache.lock().expect("threshold cache").get(&key) {
            return hit;
        }
        let mut with = accepted.to_vec();
        with.push(i);
        let d: Vec<f64> = self
            .blocked_values(&with)
            .iter()
            .zip(self.blocked_values(accepted))
            .map(|(a, b)| a - b)
            .collect();
        let s = d.len() as f64;
        let mean = d.iter().sum::<f64>() / s;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1.0);
        let out = (0.5 * mean, 0.5 * (var / s).sqrt());
        self.cache.lock().expect("threshold cache").insert(key, out);
        out
    }
}

pub fn matroid_adaptive_thresholds(
    values: &[ParametricDist],
    env: &Environment,
    batch: usize,
    seed: u64,
) -> Result<AdaptiveThresholds> {
    if batch < MIN_BATCH {
        return Err(Error::Config(format!(
            "adaptive thresholds need at least {MIN_BATCH} samples, got {batch}"
        )));
    }
    if values.len() > 63 {
        return Err(Error::Size("adaptive thresholds take at most 63 agents".into()));
    }
    env.validate(values.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM);
    let draws: Vec<Vec<f64>> = (0..batch)
        .map(|_| values.iter().map(|d| d.sample(&mut rng)).collect())
        .collect();
    let bases = draws.iter().map(|w| greedy_max_weight(env, w)).collect();
    Ok(AdaptiveThresholds {
        env: env.clone(),
        batch: draws,
        bases,
        cache: Mutex::new(HashMap::new()),
    })
}

pub enum ThresholdPolicy {
    Anonymous { theta: f64 },
    Adaptive(AdaptiveThresholds),
}

/// Online selection in index order: prize `i` is taken iff its value meets
/// the threshold and the accepted set stays feasible.
pub fn gambler_simulate(
    values: &[ParametricDist],
    env: &Environment,
    policy: &ThresholdPolicy,
    samples: u64,
    seed: u64,
) -> Result<SimResult> {
    if samples == 0 {
        return Err(Error::Param("at least one sample is required".into()));
    }
    env.validate(values.len())?;
    let tally = run(seed, samples, values.len(), |rng, t| {
        let mut accepted: Vec<usize> = Vec::new();
        let mut total = 0.0;
        for (i, d) in values.iter().enumerate() {
            let v = d.sample(rng);
            accepted.push(i);
            let fits = env.is_feasible(&accepted);
            accepted.pop();
            if !fits {
                continue;
            }
            let theta = match policy {
                ThresholdPolicy::Anonymous { theta } => *theta,
                ThresholdPolicy::Adaptive(a) => a.threshold(i, &accepted).0,
            };
            if v >= theta {
                accepted.push(i);
                total += v;
                t.served[i] += 1.0;
            }
        }
        t.record(total);
    });
    Ok(SimResult::from_tally(Objective::Welfare, &tally, seed))
}

/// Correlated values with the original marginals whose prophet earns the
/// welfare relaxation: a feasible set is drawn from the decomposition of the
/// optimal profile, its members take values from their top quantiles and
/// the others from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedSampler {
    pub env: Environment,
    pub profile: Vec<f64>,
    pub sets: Vec<(Vec<usize>, f64)>,
    pub values: Vec<ParametricDist>,
    pub ear: f64,
}

pub fn build_correlated_sampler(
    values: &[ParametricDist],
    env: &Environment,
) -> Result<CorrelatedSampler> {
    env.validate(values.len())?;
    if !matches!(
        env,
        Environment::KUnit { .. } | Environment::Uniform { .. } | Environment::Partition { .. }
    ) {
        return Err(Error::Unsupported(
            "correlated sampling needs a k-unit or partition environment".into(),
        ));
    }
    let (ear, profile) = welfare_ear(values, env)?;
    let sets = ear_decomposition(env, &profile)?;
    Ok(CorrelatedSampler {
        env: env.clone(),
        profile,
        sets,
        values: values.to_vec(),
        ear,
    })
}

impl CorrelatedSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen: &[usize] = &[];
        for (s, w) in &self.sets {
            acc += w;
            chosen = s;
            if u < acc {
                break;
            }
        }
        self.values
            .iter()
            .zip(&self.profile)
            .enumerate()
            .map(|(i, (d, &q))| {
                let r: f64 = rng.random();
                let level = if chosen.contains(&i) {
                    1.0 - q + r * q
                } else {
                    r * (1.0 - q)
                };
                d.inverse_cdf(level)
            })
            .collect()
    }

    /// Offline optimum on sampled profiles.
    pub fn prophet(&self, samples: u64, seed: u64) -> Result<SimResult> {
        if samples == 0 {
            return Err(Error::Param("at least one sample is required".into()));
        }
        let tally = run(seed, samples, self.values.len(), |rng, t| {
            let v = self.sample(rng);
            let best = greedy_max_weight(&self.env, &v);
            for &i in &best {
                t.served[i] += 1.0;
            }
            t.record(best.iter().map(|&i| v[i]).sum());
        });
        Ok(SimResult::from_tally(Objective::Welfare, &tally, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DiscreteDist;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform() -> ParametricDist {
        ParametricDist::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn single_uniform_fixed_point() {
        let (b, res) = kunit_fixed_point(&[uniform()], 1).unwrap();
        assert!((b - (2.0 - 3f64.sqrt())).abs() < 1e-9);
        assert!(res <= 1e-9);
    }

    #[test]
    fn point_mass_fixed_point() {
        let v = vec![ParametricDist::point_mass(1.0).unwrap(); 3];
        let (b, _) = kunit_fixed_point(&v, 1).unwrap();
        assert!((b - 0.75).abs() < 1e-9);
    }

    #[test]
    fn zero_values_give_zero_threshold() {
        let v = vec![ParametricDist::point_mass(0.0).unwrap(); 2];
        assert_eq!(kunit_threshold(&v, 1).unwrap(), 0.0);
    }

    #[test]
    fn threshold_falls_with_more_units() {
        let v = vec![uniform(); 6];
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let t = kunit_threshold(&v, k).unwrap();
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn single_prize_gambler() {
        let theta = kunit_threshold(&[uniform()], 1).unwrap();
        let r = gambler_simulate(
            &[uniform()],
            &Environment::k_unit(1),
            &ThresholdPolicy::Anonymous { theta },
            100_000,
            1,
        )
        .unwrap();
        assert!(r.within((1.0 - theta * theta) / 2.0, 3.0), "{r:?}");
        let low = gambler_simulate(
            &[uniform()],
            &Environment::k_unit(1),
            &ThresholdPolicy::Anonymous { theta: 0.0 },
            100_000,
            2,
        )
        .unwrap();
        assert!(low.within(0.5, 3.0));
    }

    #[test]
    fn point_masses_fill_the_units() {
        let v = vec![ParametricDist::point_mass(2.0).unwrap(); 5];
        let r = gambler_simulate(
            &v,
            &Environment::k_unit(3),
            &ThresholdPolicy::Anonymous { theta: 1.0 },
            1000,
            3,
        )
        .unwrap();
        assert_eq!(r.mean, 6.0);
        assert_eq!(r.std_err, 0.0);
    }

    #[test]
    fn upper_bound_dominates_relaxation() {
        let v = vec![
            uniform(),
            ParametricDist::exponential(2.0).unwrap(),
            ParametricDist::uniform(0.5, 2.0).unwrap(),
        ];
        for k in 1..=2 {
            let theta = kunit_threshold(&v, k).unwrap();
            let (ear, _) = welfare_ear(&v, &Environment::k_unit(k)).unwrap();
            assert!(threshold_upper_bound(&v, k, theta) >= ear - 1e-6);
        }
    }

    #[test]
    fn free_matroid_first_threshold_is_half_the_mean() {
        let v = vec![uniform(), ParametricDist::uniform(0.0, 2.0).unwrap()];
        let env = Environment::Partition {
            blocks: vec![vec![0], vec![1]],
            caps: vec![1, 1],
        };
        let a = matroid_adaptive_thresholds(&v, &env, 4000, 5).unwrap();
        let (t, se) = a.threshold(0, &[]);
        assert!((t - 0.25).abs() < 3.0 * se + 1e-9, "{t} {se}");
        assert_eq!(a.blocked_value(&[]), 0.0);
    }

    #[test]
    fn rank_one_threshold_is_half_the_max() {
        let v = vec![uniform(); 3];
        let a = matroid_adaptive_thresholds(&v, &Environment::Uniform { k: 1 }, 4000, 6).unwrap();
        let (t, se) = a.threshold(0, &[]);
        // E[max of three uniforms] = 3/4
        assert!((t - 0.375).abs() < 3.0 * se + 0.01, "{t} {se}");
    }

    #[test]
    fn small_batches_are_rejected() {
        assert!(matches!(
            matroid_adaptive_thresholds(&[uniform()], &Environment::Uniform { k: 1 }, 50, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn remainder_matches_exhaustive_search() {
        let env = Environment::Graphic {
            edges: vec![(0, 1), (1, 2), (0, 2), (2, 3), (3, 0), (1, 3), (0, 1)],
        };
        let n = 7;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let w: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let base = greedy_max_weight(&env, &w);
            let accepted: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.3).collect();
            if !env.is_feasible(&accepted) {
                continue;
            }
            let r = remainder(&env, &base, &accepted, &w);
            let got: f64 = r.iter().map(|&e| w[e]).sum();
            let rest: Vec<usize> = base.iter().copied().filter(|e| !accepted.contains(e)).collect();
            let mut best: f64 = 0.0;
            for m in 0u32..1 << rest.len() {
                let pick: Vec<usize> = (0..rest.len()).filter(|&j| m >> j & 1 == 1).map(|j| rest[j]).collect();
                let mut set = accepted.clone();
                set.extend(&pick);
                if env.is_feasible(&set) {
                    best = best.max(pick.iter().map(|&e| w[e]).sum());
                }
            }
            assert!((got - best).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_gambler_is_half_competitive_on_a_graph() {
        let v: Vec<ParametricDist> = (0..6)
            .map(|i| ParametricDist::uniform(0.0, 1.0 + i as f64 * 0.3).unwrap())
            .collect();
        let env = Environment::Graphic {
            edges: vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)],
        };
        let a = matroid_adaptive_thresholds(&v, &env, 1000, 9).unwrap();
        let r = gambler_simulate(&v, &env, &ThresholdPolicy::Adaptive(a), 20_000, 10).unwrap();
        let hulls: Vec<_> = v
            .iter()
            .map(|d| {
                PricedAgent::new(&AgentModel::linear(d.clone()).unwrap(), Objective::Welfare)
                    .unwrap()
                    .hull
            })
            .collect();
        let ear = ear_optimize(&hulls, &env).unwrap();
        assert!(r.mean >= 0.5 * (ear.value + ear.error_bound) - 3.0 * r.std_err, "{} {:?}", r.mean, ear);
    }

    #[test]
    fn balanced_sums_on_trajectories() {
        let v = vec![uniform(); 5];
        let env = Environment::Uniform { k: 2 };
        let a = matroid_adaptive_thresholds(&v, &env, 2000, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut accepted = Vec::new();
            let mut sum = 0.0;
            let mut err: f64 = 0.0;
            for i in 0..5 {
                let mut with = accepted.clone();
                with.push(i);
                if !env.is_feasible(&with) {
                    continue;
                }
                let (t, se) = a.threshold(i, &accepted);
                if rng.random::<f64>() >= t {
                    accepted.push(i);
                    sum += t;
                    err += se * se;
                }
            }
            assert!(sum >= 0.5 * a.blocked_value(&accepted) - 3.0 * err.sqrt() - 1e-9);
        }
    }

    #[test]
    fn correlated_sampler_two_uniforms() {
        let s = build_correlated_sampler(&[uniform(), uniform()], &Environment::k_unit(1)).unwrap();
        assert!((s.profile[0] - 0.5).abs() < 1e-6);
        assert!((s.ear - 0.75).abs() < 1e-6);
        let r = s.prophet(100_000, 13).unwrap();
        assert!(r.within(0.75, 3.0), "{r:?}");
    }

    #[test]
    fn correlated_sampler_keeps_marginals() {
        let v = vec![uniform(), ParametricDist::uniform(0.0, 2.0).unwrap(), uniform()];
        let env = Environment::k_unit(2);
        let s = build_correlated_sampler(&v, &env).unwrap();
        for (set, _) in &s.sets {
            assert!(env.is_feasible(set), "{:?} {:?}", s.profile, s.sets);
        }
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let draws: Vec<Vec<f64>> = (0..n).map(|_| s.sample(&mut rng)).collect();
        for (i, d) in v.iter().enumerate() {
            let mut xs: Vec<f64> = draws.iter().map(|r| r[i]).collect();
            xs.sort_by(f64::total_cmp);
            let ks = xs
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let f = 1.0 - d.tail_gt(x);
                    (f - j as f64 / n as f64).abs().max((f - (j + 1) as f64 / n as f64).abs())
                })
                .fold(0.0, f64::max);
            // critical value at level 0.001
            assert!(ks < 1.95 / (n as f64).sqrt(), "agent {i}: {ks}");
        }
        let r = s.prophet(100_000, 15).unwrap();
        assert!(r.within(s.ear, 3.0), "{} vs {}", r.mean, s.ear);
    }

    #[test]
    fn correlated_sampler_point_masses() {
        let v = vec![
            ParametricDist::point_mass(3.0).unwrap(),
            ParametricDist::point_mass(1.0).unwrap(),
            ParametricDist::point_mass(2.0).unwrap(),
        ];
        let s = build_correlated_sampler(&v, &Environment::k_unit(2)).unwrap();
        let r = s.prophet(1000, 16).unwrap();
        assert_eq!(r.std_err, 0.0);
        assert!((r.mean - 5.0).abs() < 1e-9);
    }

    #[test]
    fn correlated_sampler_rejects_graphic() {
        let env = Environment::Graphic {
            edges: vec![(0, 1)],
        };
        assert!(matches!(
            build_correlated_sampler(&[uniform()], &env),
            Err(Error::Unsupported(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fixed_point_residual_is_tiny(
            atoms in prop::collection::vec((0.0f64..5.0, 0.1f64..1.0), 1..5),
            n in 1usize..5,
            k in 1usize..4,
        ) {
            let d = DiscreteDist::from_weighted(&atoms).unwrap();
            let v = vec![ParametricDist::Explicit(d); n];
            let (b, res) = kunit_fixed_point(&v, k).unwrap();
            prop_assert!(res <= 1e-9);
            prop_assert!(b >= 0.0);
        }
    }
}
