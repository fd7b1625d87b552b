//! Sparse revised-simplex backend for programs too large for a dense tableau.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};

use super::{Backend, LinearProgram, LpSolution, LpStatus, Sense};
use crate::error::{Error, Result};

fn build(lp: &LinearProgram) -> (Problem, Vec<Variable>) {
    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<Variable> = (0..lp.num_vars())
        .map(|j| pb.add_var(lp.objective[j], (lp.lower[j], lp.upper[j])))
        .collect();
    for row in &lp.constraints {
        let expr: Vec<(Variable, f64)> = row.coefs.iter().map(|&(j, v)| (vars[j], v)).collect();
        let op = match row.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        pb.add_constraint(expr.as_slice(), op, row.rhs);
    }
    (pb, vars)
}

fn extract(sol: &Solution, vars: &[Variable]) -> LpSolution {
    let x: Vec<f64> = vars.iter().map(|&v| sol.var_value(v)).collect();
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective: sol.objective(),
        dual_bound: None,
        backend: Backend::Sparse,
    }
}

fn classify(err: microlp::Error, n: usize) -> Result<LpSolution> {
    match err {
        microlp::Error::Infeasible => {
            Ok(LpSolution::empty(LpStatus::Infeasible, n, Backend::Sparse))
        }
        microlp::Error::Unbounded => Ok(LpSolution::empty(LpStatus::Unbounded, n, Backend::Sparse)),
        other => Err(Error::Numerical(other.to_string())),
    }
}

fn finish(outcome: microlp::SolveOutcome) -> Result<Solution> {
    outcome
        .into_solution()
        .map_err(|_| Error::Numerical("sparse solve was interrupted".into()))
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let (pb, vars) = build(lp);
    match pb.solve() {
        Ok(out) => Ok(extract(&finish(out)?, &vars)),
        Err(e) => classify(e, lp.num_vars()),
    }
}

/// Solves once with `var` at its declared bounds, then fixes it to each value
/// in turn, warm-starting from the last feasible optimum.
pub(super) fn sweep(lp: &LinearProgram, var: usize, values: &[f64]) -> Result<Vec<LpSolution>> {
    let n = lp.num_vars();
    let (pb, vars) = build(lp);
    let mut current = match pb.solve() {
        Ok(out) => finish(out)?,
        Err(e) => {
            let status = classify(e, n)?;
            return Ok(vec![status; values.len()]);
        }
    };
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        match current.clone().fix_var(vars[var], v) {
            Ok(outcome) => {
                let sol = finish(outcome)?;
                out.push(extract(&sol, &vars));
                current = sol;
            }
            Err(e) => out.push(classify(e, n)?),
        }
    }
    Ok(out)
}
