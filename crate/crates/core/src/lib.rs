//! Simultaneous inference on many coefficients of a high-dimensional linear model.
//!
//! The pipeline mirrors how the pieces are used in practice:
//!
//! - [`dataset`]: CSV ingestion, target/control bookkeeping, interactions.
//! - [`lasso`]: lasso with a theory-driven penalty, post-lasso refits and the
//!   sup-score test of global insignificance.
//! - [`effects`]: double-selection estimates of the target coefficients with
//!   robust standard errors and per-observation scores.
//! - [`multitest`]: Bonferroni, Holm, Benjamini-Hochberg, the Romano-Wolf
//!   stepdown and joint confidence regions from the multiplier bootstrap.
//! - [`simulation`]: a Monte Carlo harness comparing all of the above.

pub mod dataset;
pub mod effects;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod multitest;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use dataset::{Dataset, Standardization, TargetSpec};
pub use effects::{double_select_effects, ols_effects, EffectEstimates, EffectMethod};
pub use error::{Error, Result};
pub use lasso::{fit_lasso, sup_score_test, LassoFit, PenaltyConfig, SupScoreResult};
pub use multitest::{AdjustedPValues, BootstrapDraws, JointConfidenceRegion, Method};
pub use simulation::{DgpConfig, SimulationReport};
