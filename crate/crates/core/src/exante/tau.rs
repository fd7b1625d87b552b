use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lp::LpMechanism;

const TOL: f64 = 1e-9;

/// Convex nondecreasing payment `τ_b(x)` offered to budget level `b`,
/// stored by its breakpoints starting at `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPaymentFunction {
    pub budget: f64,
    pub points: Vec<(f64, f64)>,
}

impl AllocationPaymentFunction {
    /// Lower convex envelope of `(0, 0)` and the given menu points.
    pub fn from_points(budget: f64, menu: &[(f64, f64)]) -> Self {
        let mut pts: Vec<(f64, f64)> = menu.iter().copied().filter(|p| p.0 > TOL).collect();
        pts.push((0.0, 0.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() <= TOL);
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for p in pts {
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross <= 1e-15 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        AllocationPaymentFunction {
            budget,
            points: hull,
        }
    }

    pub fn max_allocation(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    /// Payment for allocation `x`; infinite beyond the largest offered allocation.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x > self.max_allocation() + TOL {
            return f64::INFINITY;
        }
        let x = x.min(self.max_allocation());
        let i = self.points.partition_point(|p| p.0 < x).max(1);
        let (x0, p0) = self.points[i - 1];
        let (x1, p1) = self.points[i];
        if x1 - x0 <= 0.0 {
            return p1;
        }
        p0 + (p1 - p0) * (x - x0) / (x1 - x0)
    }

    /// Slopes of consecutive segments, nondecreasing by construction.
    pub fn slopes(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// `argmax {x : τ'(x) <= price}`: the end of the last segment whose slope
    /// does not exceed `price`.
    pub fn x_at_slope(&self, price: f64) -> f64 {
        let mut x = 0.0;
        for (w, s) in self.points.windows(2).zip(self.slopes()) {
            if s <= price + TOL {
                x = w[1].0;
            } else {
                break;
            }
        }
        x
    }

    /// Preferred allocation of a type with value `v` and budget `b`; ties go
    /// to the larger allocation.
    pub fn choose(&self, v: f64, b: f64) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        let mut best_u = 0.0;
        for &(x, p) in &self.points {
            if p > b + TOL {
                continue;
            }
            let u = v * x - p;
            if u >= best_u - 1e-12 {
                best = (x, p);
                best_u = best_u.max(u);
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.points.first().copied().unwrap_or((0.0, 0.0));
        if first.0.abs() > TOL || first.1.abs() > TOL {
            return Err(Error::Invariant(
                "payment function must start at the origin".into(),
            ));
        }
        let slopes = self.slopes();
        if slopes.iter().any(|s| *s < -TOL) {
            return Err(Error::Invariant("payment function decreases".into()));
        }
        if slopes.windows(2).any(|w| w[1] < w[0] - TOL) {
            return Err(Error::Invariant("payment function is not convex".into()));
        }
        if self.points.iter().any(|p| p.1 > self.budget + TOL) {
            return Err(Error::Invariant("payment exceeds the budget".into()));
        }
        Ok(())
    }
}

/// One payment function per budget level of an LP mechanism.
pub fn extract_tau(mech: &LpMechanism) -> Vec<AllocationPaymentFunction> {
    let (mv, b) = (mech.values.len(), mech.budgets.support());
    (0..b.len())
        .map(|j| {
            let menu: Vec<(f64, f64)> = (0..mv)
                .map(|i| (mech.x[mech.index(i, j)], mech.p[mech.index(i, j)]))
                .collect();
            AllocationPaymentFunction::from_points(b[j], &menu)
        })
        .collect()
}
