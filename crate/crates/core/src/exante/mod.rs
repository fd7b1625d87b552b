//! Ex ante optimal payoff curves and their closeness to price posting.

mod brute;
mod closeness;
mod lp;
mod menu;
mod tau;

use serde::{Deserialize, Serialize};

use crate::curves::{interpolate, points_csv, ConcaveCurve, Objective};

pub use brute::{brute_force_exante, BruteForceResult};
pub use closeness::{
    closeness, closeness_with, is_regular, kappa_of, theorem_bound, ClosenessPoint, ClosenessReport,
};
pub use lp::{
    build_lp, exante_curve_lp, exante_curve_on, exante_lp_mechanism, exante_lp_sweep,
    exante_private_budget_lp, type_grid, LpMechanism,
};
pub use menu::{exante_curve_two_menu, exante_public_budget, two_menu_exante, MenuMechanism};
pub use tau::{extract_tau, AllocationPaymentFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverTag {
    TwoMenu,
    LpRelaxed,
    BruteForce,
}

/// Ex ante optimal payoffs `A(q)` on a quantile grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExAnteCurve {
    pub objective: Objective,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub solver: SolverTag,
}

impl ExAnteCurve {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.grid
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect()
    }

    pub fn eval(&self, q: f64) -> f64 {
        interpolate(&self.points(), q)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> f64 {
        let m = self.max();
        self.points()
            .into_iter()
            .find(|p| p.1 >= m)
            .map_or(0.0, |p| p.0)
    }

    pub fn hull(&self) -> ConcaveCurve {
        ConcaveCurve::from_points(&self.points())
    }

    /// Largest amount by which a grid value falls below its hull.
    pub fn concavity_gap(&self) -> f64 {
        let hull = self.hull();
        self.points()
            .iter()
            .map(|&(q, v)| hull.eval(q) - v)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        points_csv(&self.points())
    }
}
