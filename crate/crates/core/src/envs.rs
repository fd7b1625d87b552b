//! Feasibility environments, ex ante feasible quantiles and the ex ante
//! relaxation over sums of concave curves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::ConcaveCurve;
use crate::error::{Error, Result};

/// Increment of the greedy optimizer on general matroids.
pub const DEFAULT_DELTA: f64 = 1.0 / 200.0;
const EXACT_SUBSETS: usize = 12;
const EXHAUSTIVE_EAF: usize = 16;
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Environment {
    KUnit {
        k: usize,
    },
    Uniform {
        k: usize,
    },
    Partition {
        blocks: Vec<Vec<usize>>,
        caps: Vec<usize>,
    },
    /// Edges `(u, v)` of a multigraph; agent `i` owns edge `i`.
    Graphic {
        edges: Vec<(usize, usize)>,
    },
    /// Tiny matroid given by its independent sets (downward closed).
    Explicit {
        n: usize,
        independent: Vec<Vec<usize>>,
    },
}

/// Union-find over graph vertices.
struct Forest {
    parent: Vec<usize>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0u64, |m, &i| m | (1u64 << i))
}

fn members(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

impl Environment {
    pub fn k_unit(k: usize) -> Self {
        Environment::KUnit { k }
    }

    /// Size of the ground set when the environment fixes it.
    pub fn ground_size(&self) -> Option<usize> {
        match self {
            Environment::KUnit { .. } | Environment::Uniform { .. } => None,
            Environment::Partition { blocks, .. } => Some(blocks.iter().map(Vec::len).sum()),
            Environment::Graphic { edges } => Some(edges.len()),
            Environment::Explicit { n, .. } => Some(*n),
        }
    }

    pub fn is_matroid_kind(&self) -> bool {
        !matches!(self, Environment::KUnit { .. })
    }

    /// Checks the environment against `n` agents.
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(g) = self.ground_size() {
            if g != n {
                return Err(Error::Config(format!(
                    "environment has {g} elements but there are {n} agents"
                )));
            }
        }
        match self {
            Environment::Partition { blocks, caps } => {
                if blocks.len() != caps.len() {
                    return Err(Error::Config("one capacity per block is required".into()));
                }
                let mut seen = vec![false; n];
                for &i in blocks.iter().flatten() {
                    if i >= n || seen[i] {
                        return Err(Error::Config(format!(
                            "blocks must partition 0..{n} (element {i})"
                        )));
                    }
                    seen[i] = true;
                }
            }
            Environment::Graphic { edges } => {
                if edges.iter().any(|&(u, v)| u == v) {
                    return Err(Error::Config("graphic matroid edges cannot be loops".into()));
                }
            }
            Environment::Explicit { independent, .. } => {
                if n > 20 {
                    return Err(Error::Size("explicit matroids are limited to 20 elements".into()));
                }
                if independent.iter().flatten().any(|&i| i >= n) {
                    return Err(Error::Config("independent set mentions an unknown element".into()));
                }
            }
            Environment::KUnit { .. } | Environment::Uniform { .. } => {}
        }
        Ok(())
    }

    pub fn rank(&self, set: &[usize]) -> usize {
        match self {
            Environment::KUnit { k } | Environment::Uniform { k } => set.len().min(*k),
            Environment::Partition { blocks, caps } => blocks
                .iter()
                .zip(caps)
                .map(|(b, &c)| set.iter().filter(|i| b.contains(i)).count().min(c))
                .sum(),
            Environment::Graphic { edges } => {
                let nv = edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0);
                let mut forest = Forest::new(nv);
                set.iter()
                    .filter(|&&i| forest.union(edges[i].0, edges[i].1))
                    .count()
            }
            Environment::Explicit { independent, .. } => {
                let m = mask_of(set);
                independent
                    .iter()
                    .map(|s| mask_of(s))
                    .filter(|s| s & !m == 0)
                    .map(|s| s.count_ones() as usize)
                    .max()
                    .unwrap_or(0)
            }
        }
    }

    pub fn is_feasible(&self, set: &[usize]) -> bool {
        match self {
            Environment::KUnit { k } | Environment::Uniform { k } => set.len() <= *k,
            _ => self.rank(set) == set.len(),
        }
    }

    /// Checks rank normalization, unit increase, monotonicity and
    /// submodularity, exhaustively up to 12 elements and on 2000 random
    /// chains otherwise.
    pub fn check_rank_axioms(&self, n: usize) -> Result<()> {
        let fail = |what: &str| Err(Error::Invariant(format!("rank function is not {what}")));
        if self.rank(&[]) != 0 {
            return fail("normalized");
        }
        if n <= EXACT_SUBSETS {
            let full = 1usize << n;
            let rank: Vec<usize> = (0..full).map(|m| self.rank(&members(m as u64))).collect();
            for m in 0..full {
                for i in 0..n {
                    if m >> i & 1 == 1 {
                        continue;
                    }
                    let with = m | 1 << i;
                    if rank[with] < rank[m] || rank[with] > rank[m] + 1 {
                        return fail("monotone with unit steps");
                    }
                    for j in i + 1..n {
                        if m >> j & 1 == 1 {
                            continue;
                        }
                        let both = with | 1 << j;
                        if rank[both] + rank[m] > rank[with] + rank[m | 1 << j] {
                            return fail("submodular");
                        }
                    }
                }
            }
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..2000 {
            order.shuffle(&mut rng);
            let mut prev = 0;
            for t in 1..=n {
                let r = self.rank(&order[..t]);
                if r < prev || r > prev + 1 {
                    return fail("monotone with unit steps");
                }
                // the next element gains no more on this prefix than on a shorter one
                if t < n {
                    let gain_big = self.rank(&order[..t + 1]) - r;
                    let mut shorter = order[..t - 1].to_vec();
                    shorter.push(order[t]);
                    let gain_small = self.rank(&shorter) - self.rank(&order[..t - 1]);
                    if gain_big > gain_small {
                        return fail("submodular");
                    }
                }
                prev = r;
            }
        }
        Ok(())
    }

    /// Whether the profile is a vector of marginal allocation probabilities
    /// of some distribution over feasible sets.
    pub fn eaf_contains(&self, q: &[f64]) -> EafVerdict {
        if q.iter().any(|x| !(-TOL..=1.0 + TOL).contains(x)) {
            return EafVerdict::exact(false);
        }
        match self {
            Environment::KUnit { k } | Environment::Uniform { k } => {
                EafVerdict::exact(q.iter().sum::<f64>() <= *k as f64 + TOL)
            }
            Environment::Partition { blocks, caps } => EafVerdict::exact(
                blocks
                    .iter()
                    .zip(caps)
                    .all(|(b, &c)| b.iter().map(|&i| q[i]).sum::<f64>() <= c as f64 + TOL),
            ),
            _ if q.len() <= EXHAUSTIVE_EAF => {
                let ok = (1u64..1 << q.len()).all(|m| {
                    let s = members(m);
                    s.iter().map(|&i| q[i]).sum::<f64>() <= self.rank(&s) as f64 + TOL
                });
                EafVerdict::exact(ok)
            }
            _ => {
                // prefixes by decreasing quantile, the sets most likely to bind
                let mut order: Vec<usize> = (0..q.len()).collect();
                order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
                let ok = (1..=order.len()).all(|t| {
                    order[..t].iter().map(|&i| q[i]).sum::<f64>()
                        <= self.rank(&order[..t]) as f64 + TOL
                });
                EafVerdict {
                    feasible: ok,
                    heuristic: true,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EafVerdict {
    pub feasible: bool,
    /// Set when membership was checked on candidate sets only.
    pub heuristic: bool,
}

impl EafVerdict {
    fn exact(feasible: bool) -> Self {
        EafVerdict {
            feasible,
            heuristic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarSolution {
    pub value: f64,
    pub profile: Vec<f64>,
    /// Additive optimality gap guaranteed by the method (zero for water-filling).
    pub error_bound: f64,
    /// Marginal threshold at which water-filling stopped, if it applies.
    pub threshold: Option<f64>,
}

/// Greedy allocation of `cap` quantile mass to the steepest positive hull
/// segments of `agents`; segments tied at the margin share the remainder in
/// proportion to their length.
fn water_fill(hulls: &[ConcaveCurve], agents: &[usize], cap: f64, q: &mut [f64]) -> f64 {
    let mut segs: Vec<(f64, usize, f64)> = Vec::new();
    for &i in agents {
        for (q0, q1, s) in hulls[i].segments() {
            if s > 0.0 && q1 > q0 {
                segs.push((s, i, q1 - q0));
            }
        }
    }
    segs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = cap;
    let mut k = 0;
    let mut lambda = 0.0;
    while k < segs.len() && left > 0.0 {
        let slope = segs[k].0;
        let mut end = k;
        while end < segs.len() && segs[end].0 >= slope * (1.0 - 1e-12) {
            end += 1;
        }
        let total: f64 = segs[k..end].iter().map(|s| s.2).sum();
        let frac = (left / total).min(1.0);
        for s in &segs[k..end] {
            q[s.1] += s.2 * frac;
        }
        left -= total * frac;
        lambda = slope;
        k = end;
    }
    if left > 0.0 {
        lambda = 0.0;
    }
    lambda
}

/// Maximizes `Σ A_i(q_i)` over ex ante feasible profiles.
pub fn ear_optimize(hulls: &[ConcaveCurve], env: &Environment) -> Result<EarSolution> {
    ear_optimize_with(hulls, env, DEFAULT_DELTA)
}

pub fn ear_optimize_with(
    hulls: &[ConcaveCurve],
    env: &Environment,
    delta: f64,
) -> Result<EarSolution> {
    let n = hulls.len();
    env.validate(n)?;
    let mut q = vec![0.0; n];
    let (threshold, error_bound) = match env {
        Environment::KUnit { k } | Environment::Uniform { k } => {
            let all: Vec<usize> = (0..n).collect();
            (Some(water_fill(hulls, &all, *k as f64, &mut q)), 0.0)
        }
        Environment::Partition { blocks, caps } => {
            for (b, &c) in blocks.iter().zip(caps) {
                water_fill(hulls, b, c as f64, &mut q);
            }
            (None, 0.0)
        }
        _ => {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::Param(format!("increment {delta} must lie in (0, 1]")));
            }
            greedy_increments(hulls, env, delta, &mut q);
            let lip = hulls.iter().map(ConcaveCurve::max_slope).fold(0.0, f64::max);
            (None, n as f64 * delta * lip)
        }
    };
    for x in q.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    let value = hulls.iter().zip(&q).map(|(h, &x)| h.eval(x)).sum();
    Ok(EarSolution {
        value,
        profile: q,
        error_bound,
        threshold,
    })
}

/// δ-greedy on the matroid polytope: grant `delta` to the agent with the
/// largest hull gain whose increment stays ex ante feasible.
fn greedy_increments(hulls: &[ConcaveCurve], env: &Environment, delta: f64, q: &mut [f64]) {
    let n = hulls.len();
    let steps = (1.0 / delta).round() as usize;
    let mut level = vec![0usize; n];
    let gain = |i: usize, l: usize| {
        let a = l as f64 / steps as f64;
        let b = (l + 1) as f64 / steps as f64;
        hulls[i].eval(b) - hulls[i].eval(a)
    };
    if n <= EXACT_SUBSETS {
        // slack of every subset, updated as mass is added
        let full = 1usize << n;
        let mut slack: Vec<f64> = (0..full)
            .map(|m| env.rank(&members(m as u64)) as f64)
            .collect();
        loop {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..n {
                if level[i] >= steps {
                    continue;
                }
                let g = gain(i, level[i]);
                if g <= 0.0 || best.is_some_and(|(bg, _)| g <= bg) {
                    continue;
                }
                let room = (0..full)
                    .filter(|m| m >> i & 1 == 1)
                    .all(|m| slack[m] >= delta - TOL);
                if room {
                    best = Some((g, i));
                }
            }
            let Some((_, i)) = best else { break };
            level[i] += 1;
            for (m, s) in slack.iter_mut().enumerate() {
                if m >> i & 1 == 1 {
                    *s -= delta;
                }
            }
        }
    } else {
        // profile kept as an average of `steps` independent sets
        let mut layers: Vec<Vec<usize>> = vec![Vec::new(); steps];
        let mut blocked = vec![false; n];
        loop {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..n {
                if blocked[i] || level[i] >= steps {
                    continue;
                }
                let g = gain(i, level[i]);
                if g > 0.0 && best.is_none_or(|(bg, _)| g > bg) {
                    best = Some((g, i));
                }
            }
            let Some((_, i)) = best else { break };
            let slot = layers.iter().position(|l| {
                !l.contains(&i) && env.is_feasible(&[l.as_slice(), &[i]].concat())
            });
            match slot {
                Some(s) => {
                    layers[s].push(i);
                    level[i] += 1;
                }
                None => blocked[i] = true,
            }
        }
    }
    for (x, l) in q.iter_mut().zip(&level) {
        *x = *l as f64 / steps as f64;
    }
}

/// Distribution over feasible sets whose marginals equal `q`, by systematic
/// sampling with one common uniform draw (per block for partition matroids).
pub fn ear_decomposition(env: &Environment, q: &[f64]) -> Result<Vec<(Vec<usize>, f64)>> {
    let verdict = env.eaf_contains(q);
    if !verdict.feasible {
        return Err(Error::Param("profile is not ex ante feasible".into()));
    }
    let groups: Vec<Vec<usize>> = match env {
        Environment::KUnit { .. } | Environment::Uniform { .. } => vec![(0..q.len()).collect()],
        Environment::Partition { blocks, .. } => blocks.clone(),
        _ => {
            return Err(Error::Unsupported(
                "decomposition is implemented for k-unit and partition environments".into(),
            ))
        }
    };
    // intervals [start, end) of each agent on its group's line
    let mut spans: Vec<(usize, f64, f64)> = Vec::new();
    let mut cuts: Vec<f64> = vec![0.0, 1.0];
    for g in &groups {
        let mut acc = 0.0;
        for &i in g {
            let qi = q[i].clamp(0.0, 1.0);
            spans.push((i, acc, acc + qi));
            cuts.push(acc.fract());
            acc += qi;
            cuts.push(acc.fract());
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 - u0 <= 0.0 {
            continue;
        }
        let u = 0.5 * (u0 + u1);
        let mut set: Vec<usize> = spans
            .iter()
            .filter(|&&(_, s, e)| {
                // some point u + j lies in [s, e)
                let j = (s - u).ceil();
                u + j < e
            })
            .map(|s| s.0)
            .collect();
        set.sort_unstable();
        match out.last_mut() {
            Some(last) if last.0 == set => last.1 += u1 - u0,
            _ => out.push((set, u1 - u0)),
        }
    }
    // rounding in a profile summing to the capacity can leave slivers
    if out.iter().any(|s| s.1 > TOL && !env.is_feasible(&s.0)) {
        return Err(Error::Invariant("decomposition produced an infeasible set".into()));
    }
    out.retain(|s| s.1 > 0.0 && env.is_feasible(&s.0));
    let total: f64 = out.iter().map(|s| s.1).sum();
    for s in &mut out {
        s.1 /= total;
    }
    Ok(out)
}

/// Maximum-weight independent set by the matroid greedy; nonpositive weights
/// are never selected and ties go to the lower index.
pub fn greedy_max_weight(env: &Environment, weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        chosen.push(i);
        if !env.is_feasible(&chosen) {
            chosen.pop();
        }
    }
    chosen.sort_unstable();
    chosen
}
