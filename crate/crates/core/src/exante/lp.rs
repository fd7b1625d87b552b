use crate::curves::{quantile_grid, Objective};
use crate::dist::{AgentModel, DiscreteDist};
use crate::error::{Error, Result};
use crate::lpsolve::{solve_lp_sweep, LinearProgram, LpSolution, LpStatus, Sense};

use super::{ExAnteCurve, SolverTag};

/// A direct mechanism on a finite type grid, indexed value-major:
/// type `(i, j)` sits at `i * budgets.len() + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpMechanism {
    pub values: DiscreteDist,
    pub budgets: DiscreteDist,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: f64,
    pub payoff: f64,
}

impl LpMechanism {
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.budgets.len() + j
    }

    pub fn ex_ante(&self) -> f64 {
        self.weights().zip(&self.x).map(|(w, x)| w * x).sum()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        let g = self.budgets.probs();
        self.values
            .probs()
            .iter()
            .flat_map(move |f| g.iter().map(move |gb| f * gb))
    }

    /// Largest gain any type gets from misreporting a higher budget whose
    /// payment it can still afford; zero means full conditional IC holds.
    pub fn upward_violation(&self) -> f64 {
        let (v, b) = (self.values.support(), self.budgets.support());
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            for j in 0..b.len() {
                let own = self.index(i, j);
                let u = v[i] * self.x[own] - self.p[own];
                for i2 in 0..v.len() {
                    for j2 in j + 1..b.len() {
                        let k = self.index(i2, j2);
                        if self.p[k] <= b[j] + 1e-12 {
                            worst = worst.max(v[i] * self.x[k] - self.p[k] - u);
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Value and budget marginals on the LP grid; continuous families use the
/// midpoint rule with `m` atoms.
pub fn type_grid(agent: &AgentModel, m: usize) -> Result<(DiscreteDist, DiscreteDist)> {
    Ok((agent.value.discretize(m)?, agent.budget.discretize(m)?))
}

/// Program over `x(v,b)` and `p(v,b)` with local value IC per budget level,
/// IR at the lowest value, downward budget IC between adjacent levels and a
/// final variable `z` equal to the ex ante allocation.
pub fn build_lp(
    values: &DiscreteDist,
    budgets: &DiscreteDist,
    objective: Objective,
) -> (LinearProgram, usize) {
    let (v, f) = (values.support(), values.probs());
    let (b, g) = (budgets.support(), budgets.probs());
    let (mv, mb) = (v.len(), b.len());
    let mut lp = LinearProgram::new();
    let xi = |i: usize, j: usize| 2 * (i * mb + j);
    let pi = |i: usize, j: usize| 2 * (i * mb + j) + 1;
    for i in 0..mv {
        for j in 0..mb {
            let w = f[i] * g[j];
            let (cx, cp) = match objective {
                Objective::Revenue => (0.0, w),
                Objective::Welfare => (w * v[i], 0.0),
            };
            lp.add_var(cx, 0.0, 1.0);
            lp.add_var(cp, 0.0, b[j]);
        }
    }
    let z = lp.add_var(0.0, 0.0, 1.0);
    for j in 0..mb {
        for i in 0..mv.saturating_sub(1) {
            let (lo, hi) = (i, i + 1);
            // the higher value does not mimic the lower one
            lp.add_constraint(
                vec![
                    (xi(lo, j), v[hi]),
                    (pi(lo, j), -1.0),
                    (xi(hi, j), -v[hi]),
                    (pi(hi, j), 1.0),
                ],
                Sense::Le,
                0.0,
            );
            // the lower value does not mimic the higher one
            lp.add_constraint(
                vec![
                    (xi(hi, j), v[lo]),
                    (pi(hi, j), -1.0),
                    (xi(lo, j), -v[lo]),
                    (pi(lo, j), 1.0),
                ],
                Sense::Le,
                0.0,
            );
        }
        lp.add_constraint(vec![(xi(0, j), -v[0]), (pi(0, j), 1.0)], Sense::Le, 0.0);
    }
    for j in 1..mb {
        for i in 0..mv {
            lp.add_constraint(
                vec![
                    (xi(i, j - 1), v[i]),
                    (pi(i, j - 1), -1.0),
                    (xi(i, j), -v[i]),
                    (pi(i, j), 1.0),
                ],
                Sense::Le,
                0.0,
            );
        }
    }
    let mut ex = Vec::with_capacity(mv * mb + 1);
    for i in 0..mv {
        for j in 0..mb {
            ex.push((xi(i, j), f[i] * g[j]));
        }
    }
    ex.push((z, -1.0));
    lp.add_constraint(ex, Sense::Eq, 0.0);
    (lp, z)
}

fn to_mechanism(
    values: &DiscreteDist,
    budgets: &DiscreteDist,
    q: f64,
    sol: &LpSolution,
) -> Result<LpMechanism> {
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::InfeasibleQuantile { q, q_max: 1.0 }),
        LpStatus::Unbounded => return Err(Error::Numerical("ex ante program unbounded".into())),
    }
    let k = values.len() * budgets.len();
    Ok(LpMechanism {
        values: values.clone(),
        budgets: budgets.clone(),
        x: (0..k).map(|t| sol.x[2 * t]).collect(),
        p: (0..k).map(|t| sol.x[2 * t + 1]).collect(),
        q,
        payoff: sol.objective,
    })
}

/// Relaxed ex ante mechanisms for each quantile in `qs` (ascending order
/// lets the sparse backend warm-start).
pub fn exante_lp_sweep(
    values: &DiscreteDist,
    budgets: &DiscreteDist,
    objective: Objective,
    qs: &[f64],
) -> Result<Vec<LpMechanism>> {
    if let Some(&q) = qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::InfeasibleQuantile { q, q_max: 1.0 });
    }
    let (lp, z) = build_lp(values, budgets, objective);
    let sols = solve_lp_sweep(&lp, z, qs)?;
    sols.iter()
        .zip(qs)
        .map(|(s, &q)| to_mechanism(values, budgets, q, s))
        .collect()
}

/// Optimal relaxed mechanism at a single quantile.
pub fn exante_lp_mechanism(
    agent: &AgentModel,
    q: f64,
    objective: Objective,
    m: usize,
) -> Result<LpMechanism> {
    let (values, budgets) = type_grid(agent, m)?;
    Ok(exante_lp_sweep(&values, &budgets, objective, &[q])?.remove(0))
}

/// Upper bound on the ex ante optimal payoff at `q` (upward budget
/// misreports are not constrained).
pub fn exante_private_budget_lp(
    agent: &AgentModel,
    q: f64,
    objective: Objective,
    m: usize,
) -> Result<f64> {
    exante_lp_mechanism(agent, q, objective, m).map(|mech| mech.payoff)
}

/// Relaxed ex ante curve on the grid `j / grid`, with the type grid
/// discretized to `m` atoms per continuous marginal.
pub fn exante_curve_lp(
    agent: &AgentModel,
    objective: Objective,
    grid: usize,
    m: usize,
) -> Result<ExAnteCurve> {
    let (values, budgets) = type_grid(agent, m)?;
    exante_curve_on(&values, &budgets, objective, grid).map(|(c, _)| c)
}

pub fn exante_curve_on(
    values: &DiscreteDist,
    budgets: &DiscreteDist,
    objective: Objective,
    grid: usize,
) -> Result<(ExAnteCurve, Vec<LpMechanism>)> {
    if grid < 2 {
        return Err(Error::Param(format!("grid size {grid} must be at least 2")));
    }
    let qs = quantile_grid(grid);
    let mechs = exante_lp_sweep(values, budgets, objective, &qs)?;
    let curve = ExAnteCurve {
        objective,
        grid: qs,
        values: mechs.iter().map(|m| m.payoff.max(0.0)).collect(),
        solver: SolverTag::LpRelaxed,
    };
    Ok((curve, mechs))
}
