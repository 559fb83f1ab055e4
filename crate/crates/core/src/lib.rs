//! Dynamic treatment regimes from observational trajectories with a binary
//! time-varying instrument.
//!
//! Conditional mean potential outcomes are only partially identified, so
//! each stage works with Manski-Pepper intervals. Regimes are estimated by
//! backward induction on a lambda-weighted point inside those intervals
//! ([`qlearn`]), or by improving a given baseline regime in the worst case
//! ([`improve`]), then projected onto depth-limited trees ([`tree`]).
//! [`sim`] holds a two-stage simulation with exact ground-truth values.

pub mod bounds;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod exec;
pub mod improve;
pub mod nuisance;
pub mod policy;
pub mod qlearn;
pub mod sim;
pub mod tree;

pub use bounds::{Interval, RewardBounds, WeightSpec};
pub use data::{Arm, Dataset, Features, History};
pub use error::{Error, Result};
pub use exec::Execution;
pub use policy::{Dtr, DtrKind, PolicyStage};
pub use qlearn::FitOptions;
