use crate::curves::Objective;
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};

const MAX_VALUES: usize = 4;
const MAX_BUDGETS: usize = 3;
const MAX_LEVELS: usize = 30;
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub payoff: f64,
    /// Allocation and payment per type, value-major like the LP.
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub nodes: u64,
}

struct Search<'a> {
    v: &'a [f64],
    b: &'a [f64],
    w: Vec<f64>,
    order: Vec<(usize, usize)>,
    options: Vec<Vec<(f64, f64)>>,
    q: f64,
    objective: Objective,
    // per DFS depth: remaining mass and remaining payoff bound
    rest_mass: Vec<f64>,
    rest_bound: Vec<f64>,
    chosen: Vec<(f64, f64)>,
    best: f64,
    best_choice: Vec<(f64, f64)>,
    nodes: u64,
    max_x: f64,
}

impl Search<'_> {
    fn gain(&self, d: usize, x: f64, p: f64) -> f64 {
        let (i, _) = self.order[d];
        match self.objective {
            Objective::Revenue => self.w[d] * p,
            Objective::Welfare => self.w[d] * self.v[i] * x,
        }
    }

    fn compatible(&self, d: usize, x: f64, p: f64) -> bool {
        let (i, j) = self.order[d];
        let (vt, bt) = (self.v[i], self.b[j]);
        let ut = vt * x - p;
        for (e, &(xs, ps)) in self.chosen.iter().enumerate() {
            let (i2, j2) = self.order[e];
            let (vs, bs) = (self.v[i2], self.b[j2]);
            if ps <= bt + TOL && vt * xs - ps > ut + TOL {
                return false;
            }
            if p <= bs + TOL && vs * x - p > vs * xs - ps + TOL {
                return false;
            }
        }
        true
    }

    fn dfs(&mut self, d: usize, mass: f64, value: f64) {
        self.nodes += 1;
        if d == self.order.len() {
            if (mass - self.q).abs() <= TOL && value > self.best {
                self.best = value;
                self.best_choice = self.chosen.clone();
            }
            return;
        }
        if mass > self.q + TOL || mass + self.rest_mass[d] * self.max_x < self.q - TOL {
            return;
        }
        if value + self.rest_bound[d] <= self.best + 1e-15 {
            return;
        }
        // allocations are monotone in value within a budget level
        let floor = match d.checked_sub(1) {
            Some(prev) if self.order[prev].1 == self.order[d].1 => self.chosen[prev].0,
            _ => 0.0,
        };
        for k in 0..self.options[d].len() {
            let (x, p) = self.options[d][k];
            if x < floor - TOL || !self.compatible(d, x, p) {
                continue;
            }
            let g = self.gain(d, x, p);
            self.chosen.push((x, p));
            self.dfs(d + 1, mass + self.w[d] * x, value + g);
            self.chosen.pop();
        }
    }
}

/// Exhaustive search over deterministic direct mechanisms whose allocations
/// and payments lie on the given grids, enforcing IR, budgets, full IC
/// (including conditional upward budget misreports) and the ex ante
/// constraint to within `1e-9`.
pub fn brute_force_exante(
    values: &DiscreteDist,
    budgets: &DiscreteDist,
    q: f64,
    objective: Objective,
    x_grid: &[f64],
    p_grid: &[f64],
) -> Result<BruteForceResult> {
    if values.len() > MAX_VALUES || budgets.len() > MAX_BUDGETS {
        return Err(Error::Size(format!(
            "{}x{} types exceeds the {MAX_VALUES}x{MAX_BUDGETS} limit",
            values.len(),
            budgets.len()
        )));
    }
    if x_grid.len() > MAX_LEVELS || p_grid.len() > MAX_LEVELS {
        return Err(Error::Size(format!(
            "grids are limited to {MAX_LEVELS} levels"
        )));
    }
    let (v, f) = (values.support(), values.probs());
    let (b, g) = (budgets.support(), budgets.probs());
    let mut xs: Vec<f64> = x_grid
        .iter()
        .copied()
        .filter(|x| (0.0..=1.0).contains(x))
        .collect();
    let mut ps: Vec<f64> = p_grid.iter().copied().filter(|p| *p >= 0.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ps.sort_by(f64::total_cmp);
    ps.dedup();

    // budget levels outer, values inner
    let order: Vec<(usize, usize)> = (0..b.len())
        .flat_map(|j| (0..v.len()).map(move |i| (i, j)))
        .collect();
    let w: Vec<f64> = order.iter().map(|&(i, j)| f[i] * g[j]).collect();
    let options: Vec<Vec<(f64, f64)>> = order
        .iter()
        .map(|&(i, j)| {
            let mut opts: Vec<(f64, f64)> = Vec::new();
            for &x in &xs {
                for &p in &ps {
                    if p <= b[j] + TOL && v[i] * x - p >= -TOL {
                        opts.push((x, p));
                    }
                }
            }
            // try high payoff first so the bound prunes early
            opts.sort_by(|a, c| match objective {
                Objective::Revenue => c.1.total_cmp(&a.1).then(c.0.total_cmp(&a.0)),
                Objective::Welfare => c.0.total_cmp(&a.0).then(a.1.total_cmp(&c.1)),
            });
            opts
        })
        .collect();
    let max_x = xs.last().copied().unwrap_or(0.0);
    let n = order.len();
    let mut rest_mass = vec![0.0; n + 1];
    let mut rest_bound = vec![0.0; n + 1];
    for d in (0..n).rev() {
        let i = order[d].0;
        rest_mass[d] = rest_mass[d + 1] + w[d];
        let top = match objective {
            Objective::Revenue => options[d].iter().map(|o| o.1).fold(0.0, f64::max),
            Objective::Welfare => v[i] * max_x,
        };
        rest_bound[d] = rest_bound[d + 1] + w[d] * top;
    }
    let mut s = Search {
        v,
        b,
        w,
        order,
        options,
        q,
        objective,
        rest_mass,
        rest_bound,
        chosen: Vec::with_capacity(n),
        best: f64::NEG_INFINITY,
        best_choice: Vec::new(),
        nodes: 0,
        max_x,
    };
    s.dfs(0, 0.0, 0.0);
    if s.best == f64::NEG_INFINITY {
        return Err(Error::InfeasibleQuantile { q, q_max: max_x });
    }
    let mb = b.len();
    let mut x = vec![0.0; n];
    let mut p = vec![0.0; n];
    for (d, &(i, j)) in s.order.iter().enumerate() {
        x[i * mb + j] = s.best_choice[d].0;
        p[i * mb + j] = s.best_choice[d].1;
    }
    Ok(BruteForceResult {
        payoff: s.best,
        x,
        p,
        nodes: s.nodes,
    })
}
