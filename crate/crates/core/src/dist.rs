//! Value and budget distributions, quantile conversions and grid discretization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;
/// Upper tail mass ignored when an unbounded family needs a finite ceiling.
const TAIL_CUTOFF: f64 = 1e-16;
/// Multiplier used to place the sentinel budget of a linear agent.
pub const SENTINEL_FACTOR: f64 = 10.0;

/// Finite distribution over nonnegative reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete", into = "RawDiscrete")]
pub struct DiscreteDist {
    support: Vec<f64>,
    probs: Vec<f64>,
    // cum[i] = P[X <= support[i]], above[i] = P[X > support[i]]
    cum: Vec<f64>,
    above: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDiscrete {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDiscrete> for DiscreteDist {
    type Error = Error;
    fn try_from(raw: RawDiscrete) -> Result<Self> {
        DiscreteDist::new(raw.support, raw.probs)
    }
}

impl From<DiscreteDist> for RawDiscrete {
    fn from(d: DiscreteDist) -> Self {
        RawDiscrete {
            support: d.support,
            probs: d.probs,
        }
    }
}

impl DiscreteDist {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::Param(format!(
                "support ({}) and probs ({}) must be nonempty and of equal length",
                support.len(),
                probs.len()
            )));
        }
        if support.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Param(
                "support must be finite and nonnegative".into(),
            ));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Param("support must be strictly ascending".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Param("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Param(format!("probabilities sum to {total}, not 1")));
        }
        let n = probs.len();
        let mut cum = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n {
            acc += probs[i];
            cum[i] = acc;
        }
        let mut above = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            above[i] = acc;
            acc += probs[i];
        }
        Ok(DiscreteDist {
            support,
            probs,
            cum,
            above,
        })
    }

    /// Builds a distribution from unsorted, possibly repeated atoms with
    /// nonnegative weights; weights are normalized.
    pub fn from_weighted(atoms: &[(f64, f64)]) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::Param("weights must have positive total".into()));
        }
        let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (v, w) in sorted {
            match support.last() {
                Some(&last) if last == v => *probs.last_mut().unwrap() += w / total,
                _ => {
                    support.push(v);
                    probs.push(w / total);
                }
            }
        }
        let s: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= s;
        }
        Self::new(support, probs)
    }

    pub fn point(v: f64) -> Result<Self> {
        Self::new(vec![v], vec![1.0])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        *self.support.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&v, &p)| p * f(v))
            .sum()
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, v: f64) -> f64 {
        match self.last_at_or_below(v) {
            Some(i) => self.cum[i].min(1.0),
            None => 0.0,
        }
    }

    /// `1 - F(v)`: mass strictly above `v`.
    pub fn quantile_of_value(&self, v: f64) -> f64 {
        match self.last_at_or_below(v) {
            Some(i) => self.above[i].clamp(0.0, 1.0),
            None => 1.0,
        }
    }

    pub fn tail_gt(&self, v: f64) -> f64 {
        self.quantile_of_value(v)
    }

    pub fn tail_ge(&self, v: f64) -> f64 {
        match self.first_at_or_above(v) {
            Some(i) => (self.above[i] + self.probs[i]).clamp(0.0, 1.0),
            None => 0.0,
        }
    }

    /// Demand `V(q)`: the smallest atom whose strict upper tail is at most `q`.
    pub fn demand(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let idx = self.above.partition_point(|&a| a > q + MASS_TOL);
        self.support[idx.min(self.support.len() - 1)]
    }

    pub fn partial_mean_ge(&self, t: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(v, _)| **v >= t)
            .map(|(v, p)| v * p)
            .sum()
    }

    pub fn partial_mean_gt(&self, t: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(v, _)| **v > t)
            .map(|(v, p)| v * p)
            .sum()
    }

    /// `E[min(X, t)]`.
    pub fn mean_min(&self, t: f64) -> f64 {
        self.expect(|v| v.min(t))
    }

    /// First positive-mass atom in `[lo, hi]`.
    pub fn atom_in(&self, lo: f64, hi: f64) -> Option<f64> {
        let i = self.support.partition_point(|&s| s < lo);
        self.support[i..]
            .iter()
            .zip(&self.probs[i..])
            .take_while(|(s, _)| **s <= hi)
            .find(|(_, p)| **p > 0.0)
            .map(|(s, _)| *s)
    }

    /// Inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.inverse_cdf(u)
    }

    /// Smallest atom with `F(v) > u`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c <= u);
        if i < self.support.len() {
            self.support[i]
        } else {
            let last = self
                .probs
                .iter()
                .rposition(|&p| p > 0.0)
                .unwrap_or(self.len() - 1);
            self.support[last]
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Param("scale factor must be positive".into()));
        }
        Self::new(
            self.support.iter().map(|v| v * c).collect(),
            self.probs.clone(),
        )
    }

    fn last_at_or_below(&self, v: f64) -> Option<usize> {
        let i = self.support.partition_point(|&s| s <= v);
        i.checked_sub(1)
    }

    fn first_at_or_above(&self, v: f64) -> Option<usize> {
        let i = self.support.partition_point(|&s| s < v);
        (i < self.support.len()).then_some(i)
    }
}

/// Parametric families used as values or budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ParametricDist {
    Uniform {
        lo: f64,
        hi: f64,
    },
    PointMass {
        v: f64,
    },
    Exponential {
        lambda: f64,
    },
    /// Equal-revenue law `F(v) = 1 - v_min / v` on `[v_min, v_max)` with the
    /// remaining mass `v_min / v_max` as an atom at `v_max`.
    EqualRevenueTruncated {
        v_min: f64,
        v_max: f64,
    },
    Explicit(DiscreteDist),
}

impl ParametricDist {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = ParametricDist::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn point_mass(v: f64) -> Result<Self> {
        let d = ParametricDist::PointMass { v };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        let d = ParametricDist::Exponential { lambda };
        d.validate()?;
        Ok(d)
    }

    pub fn equal_revenue(v_min: f64, v_max: f64) -> Result<Self> {
        let d = ParametricDist::EqualRevenueTruncated { v_min, v_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        use ParametricDist::*;
        let ok = match *self {
            Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi,
            PointMass { v } => v.is_finite() && v >= 0.0,
            Exponential { lambda } => lambda.is_finite() && lambda > 0.0,
            EqualRevenueTruncated { v_min, v_max } => {
                v_min.is_finite() && v_max.is_finite() && v_min > 0.0 && v_min < v_max
            }
            Explicit(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid parameters for {self:?}")))
        }
    }

    pub fn is_point_mass(&self) -> Option<f64> {
        match self {
            ParametricDist::PointMass { v } => Some(*v),
            ParametricDist::Explicit(d) if d.len() == 1 => Some(d.min()),
            _ => None,
        }
    }

    /// Largest value of the support; unbounded families return the point
    /// beyond which the tail mass is negligible.
    pub fn max_value(&self) -> f64 {
        use ParametricDist::*;
        match self {
            Uniform { hi, .. } => *hi,
            PointMass { v } => *v,
            Exponential { lambda } => -TAIL_CUTOFF.ln() / lambda,
            EqualRevenueTruncated { v_max, .. } => *v_max,
            Explicit(d) => d.max(),
        }
    }

    pub fn mean(&self) -> f64 {
        use ParametricDist::*;
        match self {
            Uniform { lo, hi } => 0.5 * (lo + hi),
            PointMass { v } => *v,
            Exponential { lambda } => 1.0 / lambda,
            EqualRevenueTruncated { v_min, v_max } => v_min * (1.0 + (v_max / v_min).ln()),
            Explicit(d) => d.mean(),
        }
    }

    pub fn tail_ge(&self, t: f64) -> f64 {
        use ParametricDist::*;
        match *self {
            Uniform { lo, hi } => ((hi - t) / (hi - lo)).clamp(0.0, 1.0),
            PointMass { v } => f64::from(t <= v),
            Exponential { lambda } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-lambda * t).exp()
                }
            }
            EqualRevenueTruncated { v_min, v_max } => {
                if t <= v_min {
                    1.0
                } else if t <= v_max {
                    v_min / t
                } else {
                    0.0
                }
            }
            Explicit(ref d) => d.tail_ge(t),
        }
    }

    pub fn tail_gt(&self, t: f64) -> f64 {
        use ParametricDist::*;
        match *self {
            PointMass { v } => f64::from(t < v),
            Exponential { lambda } => {
                if t < 0.0 {
                    1.0
                } else {
                    (-lambda * t).exp()
                }
            }
            EqualRevenueTruncated { v_min, v_max } => {
                if t < v_min {
                    1.0
                } else if t < v_max {
                    v_min / t
                } else {
                    0.0
                }
            }
            Explicit(ref d) => d.tail_gt(t),
            Uniform { .. } => self.tail_ge(t),
        }
    }

    /// `E[X 1{X >= t}]`.
    pub fn partial_mean_ge(&self, t: f64) -> f64 {
        use ParametricDist::*;
        match *self {
            Uniform { lo, hi } => {
                let a = t.clamp(lo, hi);
                (hi * hi - a * a) / (2.0 * (hi - lo))
            }
            PointMass { v } => {
                if t <= v {
                    v
                } else {
                    0.0
                }
            }
            Exponential { lambda } => {
                let a = t.max(0.0);
                (a + 1.0 / lambda) * (-lambda * a).exp()
            }
            EqualRevenueTruncated { v_min, v_max } => {
                if t > v_max {
                    0.0
                } else {
                    let a = t.max(v_min);
                    v_min * (v_max / a).ln() + v_min
                }
            }
            Explicit(ref d) => d.partial_mean_ge(t),
        }
    }

    /// `E[X 1{X > t}]`.
    pub fn partial_mean_gt(&self, t: f64) -> f64 {
        use ParametricDist::*;
        match *self {
            PointMass { v } => {
                if t < v {
                    v
                } else {
                    0.0
                }
            }
            EqualRevenueTruncated { v_min, v_max } => {
                if t >= v_max {
                    0.0
                } else {
                    let a = t.max(v_min);
                    v_min * (v_max / a).ln() + v_min
                }
            }
            Explicit(ref d) => d.partial_mean_gt(t),
            Uniform { .. } | Exponential { .. } => self.partial_mean_ge(t),
        }
    }

    /// `E[min(X, t)]`.
    pub fn mean_min(&self, t: f64) -> f64 {
        use ParametricDist::*;
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Uniform { lo, hi } => {
                if t <= lo {
                    t
                } else if t >= hi {
                    0.5 * (lo + hi)
                } else {
                    ((t * t - lo * lo) / 2.0 + t * (hi - t)) / (hi - lo)
                }
            }
            PointMass { v } => v.min(t),
            Exponential { lambda } => (1.0 - (-lambda * t).exp()) / lambda,
            EqualRevenueTruncated { v_min, v_max } => {
                if t <= v_min {
                    t
                } else if t >= v_max {
                    self.mean()
                } else {
                    v_min * (t / v_min).ln() + v_min
                }
            }
            Explicit(ref d) => d.mean_min(t),
        }
    }

    /// Positive-mass atom inside `[lo, hi]`, if any.
    pub fn atom_in(&self, lo: f64, hi: f64) -> Option<f64> {
        use ParametricDist::*;
        match *self {
            PointMass { v } => (lo <= v && v <= hi).then_some(v),
            EqualRevenueTruncated { v_max, .. } => (lo <= v_max && v_max <= hi).then_some(v_max),
            Explicit(ref d) => d.atom_in(lo, hi),
            Uniform { .. } | Exponential { .. } => None,
        }
    }

    /// Generalized inverse of the CDF at `u` in `[0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        use ParametricDist::*;
        match *self {
            Uniform { lo, hi } => lo + u * (hi - lo),
            PointMass { v } => v,
            Exponential { lambda } => -(1.0 - u).ln() / lambda,
            EqualRevenueTruncated { v_min, v_max } => (v_min / (1.0 - u)).min(v_max),
            Explicit(ref d) => d.inverse_cdf(u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random())
    }

    /// `m` equiprobable atoms at the quantile midpoints (midpoint rule);
    /// point masses and explicit laws are returned as they are.
    pub fn discretize(&self, m: usize) -> Result<DiscreteDist> {
        self.validate()?;
        if m < 2 {
            return Err(Error::Param(format!("grid size {m} must be at least 2")));
        }
        match self {
            ParametricDist::PointMass { v } => DiscreteDist::point(*v),
            ParametricDist::Explicit(d) => Ok(d.clone()),
            _ => {
                let w = 1.0 / m as f64;
                let atoms: Vec<(f64, f64)> = (0..m)
                    .map(|i| (self.inverse_cdf((i as f64 + 0.5) * w), w))
                    .collect();
                DiscreteDist::from_weighted(&atoms)
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        use ParametricDist::*;
        if !(c > 0.0) {
            return Err(Error::Param("scale factor must be positive".into()));
        }
        Ok(match *self {
            Uniform { lo, hi } => Uniform {
                lo: lo * c,
                hi: hi * c,
            },
            PointMass { v } => PointMass { v: v * c },
            Exponential { lambda } => Exponential { lambda: lambda / c },
            EqualRevenueTruncated { v_min, v_max } => EqualRevenueTruncated {
                v_min: v_min * c,
                v_max: v_max * c,
            },
            Explicit(ref d) => Explicit(d.scaled(c)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Utility {
    Linear,
    PublicBudget,
    PrivateBudget,
}

/// One agent: independent value and budget laws plus a utility tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub value: ParametricDist,
    pub budget: ParametricDist,
    pub utility: Utility,
}

impl AgentModel {
    /// Linear utility: the budget is a point mass far above every value.
    pub fn linear(value: ParametricDist) -> Result<Self> {
        value.validate()?;
        let sentinel = SENTINEL_FACTOR * value.max_value().max(1e-12);
        Self::build(
            value,
            ParametricDist::PointMass { v: sentinel },
            Utility::Linear,
        )
    }

    pub fn public_budget(value: ParametricDist, b: f64) -> Result<Self> {
        Self::build(value, ParametricDist::point_mass(b)?, Utility::PublicBudget)
    }

    pub fn private_budget(value: ParametricDist, budget: ParametricDist) -> Result<Self> {
        Self::build(value, budget, Utility::PrivateBudget)
    }

    fn build(value: ParametricDist, budget: ParametricDist, utility: Utility) -> Result<Self> {
        let a = AgentModel {
            value,
            budget,
            utility,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        self.value.validate()?;
        self.budget.validate()?;
        match self.utility {
            Utility::Linear => match self.budget.is_point_mass() {
                Some(b) if b > self.value.max_value() => Ok(()),
                _ => Err(Error::Param(
                    "linear agent needs a point-mass budget above the value support".into(),
                )),
            },
            Utility::PublicBudget => match self.budget.is_point_mass() {
                Some(_) => Ok(()),
                None => Err(Error::Param("public budget must be a point mass".into())),
            },
            Utility::PrivateBudget => Ok(()),
        }
    }

    /// Both marginals replaced by their `m`-atom discretizations.
    pub fn discretize(&self, m: usize) -> Result<AgentModel> {
        let value = ParametricDist::Explicit(self.value.discretize(m)?);
        let budget = ParametricDist::Explicit(self.budget.discretize(m)?);
        Ok(AgentModel {
            value,
            budget,
            utility: self.utility,
        })
    }

    /// Values and budgets multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<AgentModel> {
        Ok(AgentModel {
            value: self.value.scaled(c)?,
            budget: self.budget.scaled(c)?,
            utility: self.utility,
        })
    }
}

pub fn quantile_of_value(dist: &DiscreteDist, v: f64) -> f64 {
    dist.quantile_of_value(v)
}

pub fn demand(dist: &DiscreteDist, q: f64) -> f64 {
    dist.demand(q)
}

pub fn discretize(p: &ParametricDist, m: usize) -> Result<DiscreteDist> {
    p.discretize(m)
}

pub fn sample<R: Rng + ?Sized>(dist: &DiscreteDist, rng: &mut R) -> f64 {
    dist.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> DiscreteDist {
        DiscreteDist::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn quantile_examples() {
        let u = ParametricDist::uniform(0.0, 1.0)
            .unwrap()
            .discretize(1000)
            .unwrap();
        assert!((u.quantile_of_value(0.7) - 0.3).abs() <= 1e-3);
        let pm = DiscreteDist::point(5.0).unwrap();
        assert_eq!(pm.quantile_of_value(4.0), 1.0);
        assert_eq!(pm.quantile_of_value(6.0), 0.0);
        assert_eq!(two_point().quantile_of_value(1.0), 0.5);
    }

    #[test]
    fn demand_examples() {
        let u = ParametricDist::uniform(0.0, 1.0)
            .unwrap()
            .discretize(1000)
            .unwrap();
        assert!((u.demand(0.3) - 0.7).abs() <= 1e-3);
        assert_eq!(u.demand(0.0), u.max());
        assert_eq!(two_point().demand(0.25), 2.0);
        assert_eq!(two_point().demand(0.5), 1.0);
    }

    #[test]
    fn discretize_examples() {
        let u = ParametricDist::uniform(0.0, 1.0)
            .unwrap()
            .discretize(2)
            .unwrap();
        assert_eq!(u.support(), &[0.25, 0.75]);
        assert_eq!(u.probs(), &[0.5, 0.5]);
        let pm = ParametricDist::point_mass(3.0)
            .unwrap()
            .discretize(7)
            .unwrap();
        assert_eq!(pm.support(), &[3.0]);
        let e = ParametricDist::exponential(1.0)
            .unwrap()
            .discretize(4)
            .unwrap();
        for (i, u) in [0.125f64, 0.375, 0.625, 0.875].iter().enumerate() {
            assert!((e.support()[i] + (1.0 - u).ln()).abs() < 1e-12);
        }
        assert!(ParametricDist::Uniform { lo: 1.0, hi: 0.0 }
            .discretize(4)
            .is_err());
        assert!(ParametricDist::uniform(0.0, 1.0)
            .unwrap()
            .discretize(1)
            .is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_calibrated() {
        let pm = DiscreteDist::point(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| pm.sample(&mut rng) == 3.0));

        let d = DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| d.sample(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| d.sample(&mut r)).collect()
        };
        assert_eq!(a, b);

        let d = DiscreteDist::new(vec![1.0, 2.0], vec![0.9, 0.1]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| d.sample(&mut r) == 2.0).count();
        assert!((hits as f64 / n as f64 - 0.1).abs() < 0.01);
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let d = DiscreteDist::new(vec![0.0, 1.0, 2.5, 4.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let v = d.sample(&mut r);
            counts[d.support().iter().position(|&s| s == v).unwrap()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(d.probs())
            .map(|(&c, &p)| (c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        // 0.999 quantile of chi-square with 3 degrees of freedom
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn closed_forms_match_discretization() {
        let fams = [
            ParametricDist::uniform(0.5, 2.0).unwrap(),
            ParametricDist::exponential(1.5).unwrap(),
            ParametricDist::equal_revenue(1.0, 8.0).unwrap(),
        ];
        for f in &fams {
            let d = f.discretize(20_000).unwrap();
            for t in [0.2, 0.7, 1.1, 1.9, 3.0] {
                assert!((f.tail_ge(t) - d.tail_ge(t)).abs() < 2e-3, "{f:?} tail {t}");
                assert!(
                    (f.partial_mean_ge(t) - d.partial_mean_ge(t)).abs() < 5e-3,
                    "{f:?} pm {t}"
                );
                assert!((f.mean_min(t) - d.mean_min(t)).abs() < 5e-3, "{f:?} mm {t}");
            }
            assert!((f.mean() - d.mean()).abs() < 1e-2);
        }
    }

    #[test]
    fn serde_tagged_records() {
        let d: ParametricDist =
            serde_json::from_str(r#"{"family":"uniform","lo":0,"hi":1}"#).unwrap();
        assert_eq!(d, ParametricDist::Uniform { lo: 0.0, hi: 1.0 });
        let e: ParametricDist =
            serde_json::from_str(r#"{"family":"explicit","support":[1,2],"probs":[0.5,0.5]}"#)
                .unwrap();
        assert_eq!(e, ParametricDist::Explicit(two_point()));
        let bad = serde_json::from_str::<ParametricDist>(
            r#"{"family":"explicit","support":[2,1],"probs":[0.5,0.5]}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn linear_agent_sentinel() {
        let a = AgentModel::linear(ParametricDist::uniform(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(a.budget.is_point_mass(), Some(10.0));
        let bad = AgentModel {
            value: ParametricDist::uniform(0.0, 1.0).unwrap(),
            budget: ParametricDist::point_mass(0.5).unwrap(),
            utility: Utility::Linear,
        };
        assert!(bad.validate().is_err());
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDist> {
        prop::collection::vec((0.0f64..100.0, 0.01f64..1.0), 1..12)
            .prop_map(|atoms| DiscreteDist::from_weighted(&atoms).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip_on_atoms(d in arb_dist()) {
            for &v in d.support() {
                prop_assert_eq!(d.demand(d.quantile_of_value(v)), v);
            }
        }

        #[test]
        fn demand_is_monotone_and_inverts(d in arb_dist(), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
            let (a, b) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(d.demand(a) >= d.demand(b));
            prop_assert!(d.quantile_of_value(d.demand(a)) <= a + 1e-12);
        }

        #[test]
        fn scaling_covariance(d in arb_dist(), c in 0.1f64..10.0, q in 0.0f64..1.0) {
            let s = d.scaled(c).unwrap();
            prop_assert!((s.demand(q) - c * d.demand(q)).abs() <= 1e-9 * c * d.max().max(1.0));
            for &v in d.support() {
                prop_assert_eq!(s.quantile_of_value(c * v), d.quantile_of_value(v));
            }
        }

        #[test]
        fn uniform_discretization_converges(m in 2usize..200) {
            let d = ParametricDist::uniform(0.0, 1.0).unwrap().discretize(m).unwrap();
            for j in 0..=m {
                let q = j as f64 / m as f64;
                prop_assert!((d.demand(q) - (1.0 - q)).abs() <= 1.0 / m as f64 + 1e-12);
            }
        }
    }
}
