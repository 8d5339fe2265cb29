//! Surrogate-based optimization with strictly feasible candidates.
//!
//! The optimizer fits an ordinary-kriging surrogate to an archive of true
//! function evaluations and selects infill points with the MSRS weighted
//! score, restricted to a candidate cloud that has been filtered down to
//! the exactly feasible subset. Every true-objective evaluation is
//! therefore guaranteed to satisfy all inequality constraints and box
//! bounds, which matters when the objective is a simulation that fails on
//! infeasible inputs.

pub mod domain;
pub mod evaluator;
pub mod harness;
pub mod optimizer;
pub mod problems;
pub mod sampling;
pub mod surrogate;

mod error;

pub use domain::{Archive, Bounds, ConstraintSet, EvaluatedPoint, PointSource, Problem, RunRecord, Termination};
pub use error::Error;
pub use optimizer::{optimize, Mode, MsrsConfig, OptimizeError, SboConfig};
pub use sampling::SamplerConfig;
pub use surrogate::{KrigingConfig, KrigingModel};
