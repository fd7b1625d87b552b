use serde::{Deserialize, Serialize};

use crate::curves::{quantile_grid, Objective};
use crate::dist::{AgentModel, DiscreteDist, Utility};
use crate::error::{Error, Result};
use crate::lpsolve::{solve_lp, LinearProgram, Sense};

use super::{ExAnteCurve, SolverTag};

/// Posted menu of lotteries `(allocation, payment)`; the null option is implicit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MenuMechanism {
    pub options: Vec<(f64, f64)>,
}

impl MenuMechanism {
    /// Utility-maximizing option of type `(v, b)`, ties to the larger allocation.
    pub fn choose(&self, v: f64, b: f64) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        let mut best_u = 0.0;
        for &(x, p) in &self.options {
            if p > b + 1e-12 {
                continue;
            }
            let u = v * x - p;
            if u > best_u + 1e-12 || (u >= best_u - 1e-12 && x > best.0) {
                best = (x, p);
                best_u = best_u.max(u);
            }
        }
        best
    }

    pub fn is_well_formed(&self) -> bool {
        self.options
            .windows(2)
            .all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1 + 1e-12)
            && {
                let mut prev = (0.0, 0.0, 0.0f64);
                self.options.iter().all(|&(x, p)| {
                    let dx = x - prev.0;
                    let ok = dx <= 1e-12 || (p - prev.1) / dx >= prev.2 - 1e-9;
                    if dx > 1e-12 {
                        prev = (x, p, (p - prev.1) / dx);
                    }
                    ok
                })
            }
    }
}

struct Group {
    lo: usize,
    hi: usize,
}

/// Best mechanism in which types `[0, k1)` take nothing, `[k1, k2)` take
/// option 1 and `[k2, n)` take option 2.
fn partition_lp(
    values: &DiscreteDist,
    b: f64,
    q: f64,
    objective: Objective,
    k1: usize,
    k2: usize,
) -> Result<Option<(f64, Vec<(f64, f64)>)>> {
    let (v, f) = (values.support(), values.probs());
    let n = v.len();
    let groups = [
        Group { lo: 0, hi: k1 },
        Group { lo: k1, hi: k2 },
        Group { lo: k2, hi: n },
    ];
    let mass = |g: &Group| f[g.lo..g.hi].iter().sum::<f64>();
    let wel = |g: &Group| (g.lo..g.hi).map(|i| f[i] * v[i]).sum::<f64>();

    let mut lp = LinearProgram::new();
    // variables 0..4: x1, p1, x2, p2 ; option 0 is the null option
    let mut var = [(usize::MAX, usize::MAX); 3];
    let mut ex = Vec::new();
    for (k, g) in groups.iter().enumerate().skip(1) {
        if g.lo == g.hi {
            continue;
        }
        let (cx, cp) = match objective {
            Objective::Revenue => (0.0, mass(g)),
            Objective::Welfare => (wel(g), 0.0),
        };
        let x = lp.add_var(cx, 0.0, 1.0);
        let p = lp.add_var(cp, 0.0, b);
        var[k] = (x, p);
        ex.push((x, mass(g)));
    }
    if ex.is_empty() {
        return Ok((q.abs() <= 1e-12).then(|| (0.0, Vec::new())));
    }
    lp.add_constraint(ex, Sense::Eq, q);

    // consecutive offered options: null first, then the nonempty groups
    let offered: Vec<usize> = (0..3)
        .filter(|&k| k == 0 || groups[k].lo < groups[k].hi)
        .collect();
    let terms = |k: usize, v: f64| -> Vec<(usize, f64)> {
        if k == 0 {
            Vec::new()
        } else {
            vec![(var[k].0, v), (var[k].1, -1.0)]
        }
    };
    for w in offered.windows(2) {
        let (a, c) = (w[0], w[1]);
        // lowest type of the upper group prefers its option
        let vl = v[groups[c].lo];
        let mut row = terms(a, vl);
        row.extend(terms(c, vl).into_iter().map(|(j, x)| (j, -x)));
        lp.add_constraint(row, Sense::Le, 0.0);
        // highest type of the lower group prefers its own option
        if groups[a].lo < groups[a].hi {
            let vh = v[groups[a].hi - 1];
            let mut row = terms(c, vh);
            row.extend(terms(a, vh).into_iter().map(|(j, x)| (j, -x)));
            lp.add_constraint(row, Sense::Le, 0.0);
        }
        if a != 0 {
            lp.add_constraint(vec![(var[a].0, 1.0), (var[c].0, -1.0)], Sense::Le, 0.0);
        }
    }
    let sol = solve_lp(&lp)?;
    if !sol.is_optimal() {
        return Ok(None);
    }
    let options = offered
        .iter()
        .skip(1)
        .map(|&k| (sol.x[var[k].0], sol.x[var[k].1]))
        .collect();
    Ok(Some((sol.objective, options)))
}

/// Optimal ex ante mechanism with at most two menu options for a public
/// budget `b`, found by solving one small program per partition of the value
/// atoms into null, option-1 and option-2 groups.
pub fn two_menu_exante(
    values: &DiscreteDist,
    b: f64,
    q: f64,
    objective: Objective,
) -> Result<(f64, MenuMechanism)> {
    let q_max = if b > 0.0 { 1.0 } else { 0.0 };
    if !(0.0..=q_max + 1e-12).contains(&q) {
        return Err(Error::InfeasibleQuantile { q, q_max });
    }
    if q <= 0.0 {
        return Ok((0.0, MenuMechanism::default()));
    }
    let n = values.len();
    let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
    for k1 in 0..=n {
        for k2 in k1..=n {
            if let Some((val, opts)) = partition_lp(values, b, q, objective, k1, k2)? {
                if best.as_ref().is_none_or(|(bv, _)| val > *bv + 1e-12) {
                    best = Some((val, opts));
                }
            }
        }
    }
    let (val, mut opts) = best.ok_or(Error::InfeasibleQuantile { q, q_max })?;
    opts.retain(|&(x, p)| x > 1e-12 || p > 1e-12);
    opts.sort_by(|a, c| a.0.total_cmp(&c.0).then(a.1.total_cmp(&c.1)));
    opts.dedup_by(|a, c| (a.0 - c.0).abs() <= 1e-12 && (a.1 - c.1).abs() <= 1e-12);
    Ok((val, MenuMechanism { options: opts }))
}

/// Two-menu optimum for an agent with a public (or no) budget.
pub fn exante_public_budget(
    agent: &AgentModel,
    q: f64,
    objective: Objective,
    m: usize,
) -> Result<(f64, MenuMechanism)> {
    let b = match (agent.utility, agent.budget.is_point_mass()) {
        (Utility::Linear | Utility::PublicBudget, Some(b)) => b,
        _ => return Err(Error::Param("two-menu search needs a public budget".into())),
    };
    two_menu_exante(&agent.value.discretize(m)?, b, q, objective)
}

pub fn exante_curve_two_menu(
    agent: &AgentModel,
    objective: Objective,
    grid: usize,
    m: usize,
) -> Result<ExAnteCurve> {
    let qs = quantile_grid(grid);
    let values = qs
        .iter()
        .map(|&q| exante_public_budget(agent, q, objective, m).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExAnteCurve {
        objective,
        grid: qs,
        values,
        solver: SolverTag::TwoMenu,
    })
}
