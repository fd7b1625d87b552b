//! Quantile-space payoff curves, ex ante relaxations and pricing mechanisms
//! for agents with budgets.

pub mod curves;
pub mod dist;
pub mod envs;
pub mod error;
pub mod exante;
pub mod lpsolve;
pub mod mech;
pub mod prophet;
pub mod sim;

pub use error::{Error, Result};
