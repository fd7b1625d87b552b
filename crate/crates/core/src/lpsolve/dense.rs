//! Dense bounded-variable primal simplex with a two-phase start.

use super::{Backend, LinearProgram, LpSolution, LpStatus, Sense};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const OPT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const HARRIS_TOL: f64 = 1e-9;
/// Pivots between recomputations of the basic values from the basis inverse.
const REFRESH_EVERY: usize = 50;

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    cols: usize,
    t: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    // original extended columns, kept to recompute basic values
    a_ext: Vec<f64>,
    rhs: Vec<f64>,
    bland: bool,
    degenerate: usize,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut x: Vec<f64> = lp
            .lower
            .iter()
            .zip(&lp.upper)
            .map(|(&l, &u)| {
                if l.is_finite() {
                    l
                } else if u.is_finite() {
                    u
                } else {
                    0.0
                }
            })
            .collect();
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        let act = lp.row_activity(&x);

        // slack bounds per row
        let mut art_rows = Vec::new();
        let mut slack_val = vec![0.0; m];
        let mut art_sign = vec![0.0; m];
        for (i, row) in lp.constraints.iter().enumerate() {
            let (ls, us) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(ls);
            hi.push(us);
            let r = row.rhs - act[i];
            if r >= ls && r <= us {
                slack_val[i] = r;
            } else {
                let beta = r.clamp(ls, us);
                slack_val[i] = beta;
                art_sign[i] = if r > beta { 1.0 } else { -1.0 };
                art_rows.push(i);
            }
        }
        x.extend_from_slice(&slack_val);
        let na = art_rows.len();
        for _ in 0..na {
            lo.push(0.0);
            hi.push(f64::INFINITY);
        }
        let cols = n + m + na;
        let mut a_ext = vec![0.0; m * cols];
        for (i, row) in lp.constraints.iter().enumerate() {
            for &(j, v) in &row.coefs {
                a_ext[i * cols + j] += v;
            }
            a_ext[i * cols + n + i] = 1.0;
        }
        let mut basis = vec![0; m];
        let mut is_basic = vec![false; cols];
        for i in 0..m {
            basis[i] = n + i;
        }
        for (k, &i) in art_rows.iter().enumerate() {
            let col = n + m + k;
            a_ext[i * cols + col] = art_sign[i];
            basis[i] = col;
            x.push((lp.constraints[i].rhs - act[i] - slack_val[i]) / art_sign[i]);
        }
        for &b in &basis {
            is_basic[b] = true;
        }
        let mut t = a_ext.clone();
        for &i in &art_rows {
            let s = art_sign[i];
            for v in &mut t[i * cols..(i + 1) * cols] {
                *v /= s;
            }
        }
        let rhs = lp.constraints.iter().map(|r| r.rhs).collect();
        Tableau {
            m,
            n,
            cols,
            t,
            d: vec![0.0; cols],
            basis,
            is_basic,
            x,
            lo,
            hi,
            a_ext,
            rhs,
            bland: false,
            degenerate: 0,
            iterations: 0,
        }
    }

    fn num_art(&self) -> usize {
        self.cols - self.n - self.m
    }

    fn price(&mut self, cost: &[f64]) {
        let cols = self.cols;
        self.d.copy_from_slice(cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.t[i * cols..(i + 1) * cols];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Recomputes basic values from the nonbasic ones through the basis inverse,
    /// which sits in the slack columns of the tableau.
    fn refresh_basic_values(&mut self) {
        let (m, n, cols) = (self.m, self.n, self.cols);
        let mut r = self.rhs.clone();
        for (i, ri) in r.iter_mut().enumerate() {
            let row = &self.a_ext[i * cols..(i + 1) * cols];
            for j in 0..cols {
                if !self.is_basic[j] && row[j] != 0.0 {
                    *ri -= row[j] * self.x[j];
                }
            }
        }
        for k in 0..m {
            let binv = &self.t[k * cols + n..k * cols + n + m];
            self.x[self.basis[k]] = binv.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
    }

    fn choose_entering(&self, allowed: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..allowed {
            if self.is_basic[j] || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj > OPT_TOL && self.x[j] < self.hi[j] {
                1.0
            } else if dj < -OPT_TOL && self.x[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(b, _)| dj.abs() > self.d[b].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    fn run(&mut self, allowed: usize, limit: usize) -> Result<Phase> {
        let bland_after = 10 * (self.m + self.cols);
        loop {
            self.iterations += 1;
            if self.iterations > limit {
                return Err(Error::Numerical(format!(
                    "simplex exceeded {limit} iterations"
                )));
            }
            if self.iterations % REFRESH_EVERY == 0 {
                self.refresh_basic_values();
            }
            let Some((q, dir)) = self.choose_entering(allowed) else {
                return Ok(Phase::Optimal);
            };
            let cols = self.cols;
            // Harris ratio test: relax bounds by HARRIS_TOL to find the
            // longest safe step, then take the largest pivot within it.
            let mut theta = f64::INFINITY;
            for i in 0..self.m {
                let alpha = self.t[i * cols + q] * dir;
                let b = self.basis[i];
                let r = if alpha > PIVOT_TOL && self.lo[b].is_finite() {
                    (self.x[b] - self.lo[b] + HARRIS_TOL) / alpha
                } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                    (self.hi[b] - self.x[b] + HARRIS_TOL) / -alpha
                } else {
                    continue;
                };
                theta = theta.min(r);
            }
            let span = self.hi[q] - self.lo[q];
            let mut step = span;
            let mut leave: Option<(usize, f64)> = None;
            if theta < span {
                let mut best = 0.0;
                for i in 0..self.m {
                    let alpha = self.t[i * cols + q] * dir;
                    let b = self.basis[i];
                    let r = if alpha > PIVOT_TOL && self.lo[b].is_finite() {
                        (self.x[b] - self.lo[b]) / alpha
                    } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                        (self.hi[b] - self.x[b]) / -alpha
                    } else {
                        continue;
                    };
                    if r > theta {
                        continue;
                    }
                    let better = if self.bland {
                        leave.is_none_or(|(l, _)| b < self.basis[l])
                    } else {
                        alpha.abs() > best
                    };
                    if better {
                        best = alpha.abs();
                        step = r.max(0.0);
                        leave = Some((i, alpha));
                    }
                }
            }
            if !step.is_finite() {
                return Ok(Phase::Unbounded);
            }
            if step <= DEGENERATE_STEP {
                self.degenerate += 1;
                if self.degenerate >= bland_after {
                    self.bland = true;
                }
            } else {
                self.degenerate = 0;
            }
            self.x[q] += dir * step;
            for i in 0..self.m {
                let tiq = self.t[i * cols + q];
                if tiq != 0.0 {
                    self.x[self.basis[i]] -= tiq * dir * step;
                }
            }
            match leave {
                None => {
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((r, alpha)) => {
                    let out = self.basis[r];
                    self.x[out] = if alpha > 0.0 {
                        self.lo[out]
                    } else {
                        self.hi[out]
                    };
                    self.pivot(r, q);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + q];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
        self.d[q] = 0.0;
        let out = self.basis[r];
        self.is_basic[out] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    let mut tab = Tableau::build(lp);
    let limit = 200 * (tab.m + tab.cols) + 1000;
    let na = tab.num_art();
    if na > 0 {
        let mut cost = vec![0.0; tab.cols];
        for c in cost.iter_mut().skip(n + tab.m) {
            *c = -1.0;
        }
        tab.price(&cost);
        tab.run(tab.cols, limit)?;
        tab.refresh_basic_values();
        let infeas: f64 = tab.x[n + tab.m..].iter().sum();
        let scale = 1.0 + tab.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > 1e-9 * scale {
            return Ok(LpSolution::empty(LpStatus::Infeasible, n, Backend::Dense));
        }
        for j in n + tab.m..tab.cols {
            tab.lo[j] = 0.0;
            tab.hi[j] = 0.0;
            if !tab.is_basic[j] {
                tab.x[j] = 0.0;
            }
        }
    }
    let mut cost = vec![0.0; tab.cols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.price(&cost);
    tab.degenerate = 0;
    match tab.run(n + tab.m, limit)? {
        Phase::Unbounded => return Ok(LpSolution::empty(LpStatus::Unbounded, n, Backend::Dense)),
        Phase::Optimal => {}
    }
    tab.refresh_basic_values();
    let x: Vec<f64> = tab.x[..n].to_vec();

    // dual estimate y_i = -d(slack_i), clipped to the sign its row allows
    let y: Vec<f64> = lp
        .constraints
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let yi = -tab.d[n + i];
            match row.sense {
                Sense::Le => yi.max(0.0),
                Sense::Ge => yi.min(0.0),
                Sense::Eq => yi,
            }
        })
        .collect();
    let mut reduced = lp.objective.clone();
    for (row, &yi) in lp.constraints.iter().zip(&y) {
        for &(j, v) in &row.coefs {
            reduced[j] -= yi * v;
        }
    }
    let mut bound: f64 = lp
        .constraints
        .iter()
        .zip(&y)
        .map(|(r, yi)| r.rhs * yi)
        .sum();
    for (j, &rj) in reduced.iter().enumerate() {
        if rj.abs() <= 1e-11 {
            continue;
        }
        let b = if rj > 0.0 { lp.upper[j] } else { lp.lower[j] };
        bound += rj * b;
    }
    let objective = lp.objective_value(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        dual_bound: Some(bound),
        backend: Backend::Dense,
    })
}
