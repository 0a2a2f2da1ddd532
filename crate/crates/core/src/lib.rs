//! Desk-scale causality theory for continuous Lorentzian metrics.
//!
//! The crate turns the qualitative machinery of low-regularity causality
//! theory into finite computations: cone-field reachability on grids,
//! curve-space topology (sup and Hausdorff metrics, limit-curve
//! extraction), causal-ladder diagnostics, stability constructions, and
//! maximal causal curves via direct-method length maximization.
//!
//! Everything is sampled: passes are evidence at the configured resolution,
//! while failures carry machine-checkable witnesses.

pub mod catalog;
pub mod curve;
pub mod error;
pub mod geom;
pub mod ladder;
pub mod limit;
pub mod reach;
pub mod scenario;
pub mod solver;

pub use error::{CausalityError, Result};
