//! Dual instrumental-variable kernel regression and an epoch-based
//! contextual bandit policy for confounded contexts.
//!
//! - [`kernels`]: kernel specs, Gram matrices, explicit feature maps.
//! - [`dualiv`]: the kernelised saddle-point estimator and its checks.
//! - [`envs`]: synthetic confounded bandit instances.
//! - [`policy`]: DIV-ELS, inverse gap weighting, baselines.
//! - [`runner`]: repeated runs, regret aggregation, CSV output.

pub mod dualiv;
pub mod envs;
mod error;
pub mod kernels;
mod points;
pub mod policy;
pub mod runner;
pub mod seeding;

pub use error::{Error, Result};
pub use points::PointSet;
