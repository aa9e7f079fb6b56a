use crate::plan::TransportPlan;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, OtError>;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid cost matrix: {0}")]
    InvalidCost(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The Sinkhorn iteration budget ran out before the marginal residual met
    /// the tolerance. The last iterate is kept so the caller can decide
    /// whether to use it.
    #[error("sinkhorn did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        plan: Box<TransportPlan>,
        iterations: usize,
        residual: f64,
    },

    #[error("numerical overflow in scaling iteration {iteration}")]
    NumericalOverflow { iteration: usize },

    #[error("row groups do not partition the {rows} plan rows: {reason}")]
    GroupCoverage { rows: usize, reason: String },

    #[error("plan row {row} has zero mass")]
    ZeroRow { row: usize },

    #[error("initial plan entry ({row}, {col}) = {value} is not strictly positive")]
    NonPositiveInit { row: usize, col: usize, value: f64 },

    #[error("training set is empty")]
    EmptyTrainSet,
}

pub(crate) fn shape_mismatch(
    context: &'static str,
    expected: impl std::fmt::Debug,
    found: impl std::fmt::Debug,
) -> OtError {
    OtError::DimensionMismatch {
        context,
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    }
}
