//! Accelerated oblique random survival forests.
//!
//! Trees split on linear combinations of predictors whose coefficients come
//! from a single Newton–Raphson step on the Cox partial likelihood (or a
//! converged fit, or random draws). Importance by coefficient negation,
//! permutation or node-level p-values; IPCW evaluation metrics; a simulator
//! and benchmark harness.

pub mod bench;
pub mod coxscore;
pub mod error;
pub mod forest;
pub mod importance;
pub mod metrics;
pub mod simgen;
pub mod splitfind;
pub mod survdata;
pub mod tree;

pub use coxscore::{newton_raphson_fit, newton_raphson_step, CoxStepResult};
pub use error::{Error, Result};
pub use forest::{BootstrapMode, Forest, ForestParams};
pub use importance::{VIReport, VITechnique};
pub use simgen::{SimConfig, SimData};
pub use splitfind::LinearCombo;
pub use survdata::SurvivalDataset;
pub use tree::{ComboStrategy, GrowParams, ObliqueTree};
