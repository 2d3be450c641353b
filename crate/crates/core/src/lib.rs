//! Multi-stage stochastic programs with a limited number of revisions.

pub mod base_problems;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod formulations;
pub mod hypercube;
pub mod revision;
pub mod tree;

pub use error::{Error, Result};
pub use revision::{ElbeSubtree, PlanAdjustmentPolicy};
pub use tree::{ScenarioTree, TreeViolation};
