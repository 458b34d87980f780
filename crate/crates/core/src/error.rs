use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column '{column}': value '{value}' is not numeric")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },

    #[error("outcome column '{0}' not found")]
    OutcomeNotFound(String),

    #[error("target selection '{0}' matches no column")]
    NoTargetMatch(String),

    #[error("column '{0}' not found")]
    ColumnNotFound(String),

    #[error("column '{0}' already exists")]
    NameCollision(String),

    #[error("all regressors are constant; nothing left to estimate")]
    NoRegressors,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column '{0}' has zero variance")]
    ConstantColumn(String),

    #[error("penalty loading for column '{0}' is zero")]
    ZeroLoading(String),

    #[error(
        "coordinate descent did not converge after {passes} passes \
         (max KKT violation {max_kkt_violation:.3e})"
    )]
    NonConvergence {
        passes: usize,
        max_kkt_violation: f64,
        /// Last iterate, standardized scale.
        coefficients: Vec<f64>,
    },

    #[error("design is rank deficient; dependent columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("target '{0}' is perfectly explained by the other regressors")]
    DegenerateTarget(String),

    #[error("score variance of target '{0}' is zero")]
    ZeroScoreVariance(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{failed} of {total} replications failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
}
