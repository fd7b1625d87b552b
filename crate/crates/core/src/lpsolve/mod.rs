//! Linear programs `max c'x` subject to row constraints and box bounds.
//!
//! Small programs go through a dense bounded-variable primal simplex.
//! Programs whose dense tableau would not fit comfortably in memory are
//! handed to a sparse revised simplex, which also supports warm-started
//! sweeps over the value of one fixed variable.

mod dense;
mod sparse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense tableau size (rows times columns) above which the sparse backend is used.
pub const DENSE_LIMIT: usize = 250_000;
const FEAS_TOL: f64 = 1e-7;
const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Rows are stored sparsely; `from_dense` accepts the textbook `Ax <= b` form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Objective of a sign-feasible dual built from the final basis (dense backend only).
    pub dual_bound: Option<f64>,
    pub backend: Backend,
}

impl LpSolution {
    fn empty(status: LpStatus, n: usize, backend: Backend) -> Self {
        LpSolution {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            dual_bound: None,
            backend,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(obj);
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { coefs, sense, rhs });
    }

    /// `max c'x` s.t. `Ax <= b`, `lower <= x <= upper`.
    pub fn from_dense(
        c: Vec<f64>,
        a: &[Vec<f64>],
        b: &[f64],
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Param("row count and rhs length differ".into()));
        }
        let mut lp = LinearProgram {
            objective: c,
            constraints: Vec::new(),
            lower,
            upper,
        };
        for (row, &rhs) in a.iter().zip(b) {
            if row.len() != lp.num_vars() {
                return Err(Error::Param(
                    "matrix width differs from variable count".into(),
                ));
            }
            let coefs = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect();
            lp.add_constraint(coefs, Sense::Le, rhs);
        }
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Param(
                "bound vectors must match the variable count".into(),
            ));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Param("objective coefficients must be finite".into()));
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::Param(format!(
                    "bad bounds on variable {j}: [{l}, {u}]"
                )));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() || row.coefs.iter().any(|(j, v)| *j >= n || !v.is_finite()) {
                return Err(Error::Param(format!(
                    "row {i} has a bad coefficient or index"
                )));
            }
        }
        Ok(())
    }

    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|r| r.coefs.iter().map(|(j, v)| v * x[*j]).sum())
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, act) in self.constraints.iter().zip(self.row_activity(x)) {
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v / (1.0 + row.rhs.abs()));
        }
        for ((v, l), u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - v).max(v - u);
        }
        worst
    }

    fn dense_size(&self) -> usize {
        let m = self.num_rows();
        m.saturating_mul(self.num_vars() + 2 * m + 1)
    }

    pub fn backend(&self) -> Backend {
        if self.dense_size() <= DENSE_LIMIT {
            Backend::Dense
        } else {
            Backend::Sparse
        }
    }
}

/// Certifies feasibility of an optimal point and snaps values that sit within
/// the bound tolerance back onto their bounds.
fn certify(lp: &LinearProgram, mut sol: LpSolution) -> Result<LpSolution> {
    if sol.status != LpStatus::Optimal {
        return Ok(sol);
    }
    for ((v, l), u) in sol.x.iter_mut().zip(&lp.lower).zip(&lp.upper) {
        if *v < *l && *l - *v <= BOUND_TOL {
            *v = *l;
        }
        if *v > *u && *v - *u <= BOUND_TOL {
            *v = *u;
        }
    }
    let viol = lp.max_violation(&sol.x);
    if viol > FEAS_TOL {
        return Err(Error::Numerical(format!(
            "solution violates constraints by {viol:e}"
        )));
    }
    sol.objective = lp.objective_value(&sol.x);
    Ok(sol)
}

/// Solves the program; infeasibility and unboundedness are reported through
/// the status, never as errors.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    match lp.backend() {
        Backend::Dense => solve_dense_checked(lp),
        Backend::Sparse => certify(lp, sparse::solve(lp)?),
    }
}

/// Dense solve whose point must certify; otherwise the sparse backend retries.
fn solve_dense_checked(lp: &LinearProgram) -> Result<LpSolution> {
    match dense::solve(lp).and_then(|s| certify(lp, s)) {
        Err(Error::Numerical(_)) => certify(lp, sparse::solve(lp)?),
        other => other,
    }
}

/// Solves the program once per value, with variable `var` fixed to that value.
/// The sparse backend warm-starts each solve from the previous optimum.
pub fn solve_lp_sweep(lp: &LinearProgram, var: usize, values: &[f64]) -> Result<Vec<LpSolution>> {
    lp.validate()?;
    if var >= lp.num_vars() {
        return Err(Error::Param(format!("sweep variable {var} out of range")));
    }
    let fix = |v: f64| {
        let mut fixed = lp.clone();
        fixed.lower[var] = v;
        fixed.upper[var] = v;
        fixed
    };
    if lp.backend() == Backend::Dense {
        return values.iter().map(|&v| solve_dense_checked(&fix(v))).collect();
    }
    sparse::sweep(lp, var, values)?
        .into_iter()
        .zip(values)
        .map(|(sol, &v)| certify(&fix(v), sol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dense_matches_sparse_on_budgeted_welfare_lp() {
        use crate::curves::Objective;
        use crate::dist::DiscreteDist;
        // once produced far-infeasible "optimal" points from tiny pivots
        let v = DiscreteDist::new(
            vec![0.51, 0.72, 2.81, 2.97, 3.16, 4.88, 6.52, 8.96, 8.97, 9.11],
            vec![0.1432, 0.1206, 0.0807, 0.1524, 0.0659, 0.1212, 0.1246, 0.1109, 0.0103, 0.0702],
        )
        .unwrap();
        let b = DiscreteDist::new(vec![0.26, 6.94, 7.58], vec![0.413, 0.1634, 0.4236]).unwrap();
        let (lp, z) = crate::exante::build_lp(&v, &b, Objective::Welfare);
        for j in 0..=50 {
            let mut f = lp.clone();
            f.lower[z] = j as f64 / 50.0;
            f.upper[z] = f.lower[z];
            let d = dense::solve(&f).unwrap();
            let s = sparse::solve(&f).unwrap();
            assert!(f.max_violation(&d.x) < 1e-8, "q = {}", f.lower[z]);
            assert!((d.objective - s.objective).abs() < 1e-7, "q = {}", f.lower[z]);
        }
    }

    #[test]
    fn single_variable() {
        let lp = LinearProgram::from_dense(vec![1.0], &[vec![1.0]], &[3.0], vec![0.0], vec![10.0])
            .unwrap();
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_optimum_set() {
        let lp = LinearProgram::from_dense(
            vec![1.0, 1.0],
            &[vec![1.0, 1.0]],
            &[1.0],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.dual_bound.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn statuses() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(x, -1.0)], Sense::Le, 0.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);

        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_and_free_variables() {
        // max x - y, x + y = 1, x - y <= 0.5, y free
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 5.0);
        let y = lp.add_var(-1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Sense::Le, 0.5);
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective - 0.5).abs() < 1e-12);
        assert!((s.x[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_independent_solves() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(2.0, 0.0, 1.0);
        let y = lp.add_var(1.0, 0.0, 1.0);
        let z = lp.add_var(0.0, 0.0, 2.0);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0), (z, -1.0)], Sense::Eq, 0.0);
        let vals = [0.0, 0.5, 1.0, 1.5, 2.0];
        let swept = solve_lp_sweep(&lp, z, &vals).unwrap();
        let want = [0.0, 1.0, 2.0, 2.5, 3.0];
        for (s, w) in swept.iter().zip(want) {
            assert!((s.objective - w).abs() < 1e-9);
        }
        let sparse = sparse::sweep(&lp, z, &vals).unwrap();
        for (s, w) in sparse.iter().zip(want) {
            assert!((s.objective - w).abs() < 1e-9);
        }
    }

    #[test]
    fn backends_agree() {
        let mut lp = LinearProgram::new();
        let n = 12;
        for j in 0..n {
            lp.add_var(1.0 + (j % 5) as f64, 0.0, 1.0 + j as f64 / 7.0);
        }
        for i in 0..8 {
            let coefs = (0..n)
                .map(|j| (j, (((i * 7 + j * 3) % 11) as f64) - 3.0))
                .collect();
            lp.add_constraint(coefs, Sense::Le, 4.0 + i as f64);
        }
        let d = dense::solve(&lp).unwrap();
        let s = sparse::solve(&lp).unwrap();
        assert!((lp.objective_value(&d.x) - lp.objective_value(&s.x)).abs() < 1e-7);
    }

    fn arb_lp() -> impl Strategy<Value = LinearProgram> {
        (2usize..8, 2usize..10).prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(-5i32..6, n),
                prop::collection::vec(prop::collection::vec(-4i32..5, n), m),
                prop::collection::vec(0i32..10, m),
                prop::collection::vec(1i32..5, n),
            )
                .prop_map(move |(c, a, b, u)| {
                    let a: Vec<Vec<f64>> = a
                        .into_iter()
                        .map(|r| r.into_iter().map(f64::from).collect())
                        .collect();
                    let b: Vec<f64> = b.into_iter().map(f64::from).collect();
                    LinearProgram::from_dense(
                        c.into_iter().map(f64::from).collect(),
                        &a,
                        &b,
                        vec![0.0; n],
                        u.into_iter().map(f64::from).collect(),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn weak_duality_and_feasibility(lp in arb_lp()) {
            let s = solve_lp(&lp).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            prop_assert!(lp.max_violation(&s.x) <= 1e-7);
            let bound = s.dual_bound.unwrap();
            prop_assert!(bound >= s.objective - 1e-9);
            prop_assert!(bound - s.objective <= 1e-6);
        }

        #[test]
        fn deterministic(lp in arb_lp()) {
            let a = solve_lp(&lp).unwrap();
            let b = solve_lp(&lp).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
