//! Numerical toolkit for stochastic optimal control with delay.
//!
//! Simulates controlled stochastic delay differential equations, solves the
//! associated anticipated backward SDEs and the backward random differential
//! equation for the auxiliary adjoint, runs spike-variation order studies,
//! and checks the delayed maximum condition, with a fully solvable
//! linear-quadratic benchmark.

pub mod absde;
pub mod adjoint;
pub mod brownian;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod lq;
pub mod mp;
pub mod real;
pub mod report;
pub mod sdde;
pub mod stats;
pub mod variation;

pub use error::{Error, Result};
pub use real::Real;

/// Concrete `f64` aliases used by the CLI and the acceptance runs.
pub type Grid = grid::TimeGrid<f64>;
pub type Ensemble = brownian::BrownianEnsemble<f64>;
pub type Problem = sdde::DelayProblem<f64>;
pub type Paths = sdde::StatePaths<f64>;
pub type Control = sdde::ControlProcess<f64>;
