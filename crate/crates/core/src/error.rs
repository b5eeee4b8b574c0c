use thiserror::Error;

#[derive(Debug, Error)]
pub enum VpcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curves or operators live on different grids")]
    IncompatibleGrids,

    #[error("incompatible panels: {0}")]
    IncompatiblePanels(String),

    #[error("curve {index} has zero L2 norm")]
    DegenerateCurve { index: usize },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("kernel is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("discrepancy spectrum is zero; the lag carries no information")]
    NoDiscrepancy,

    #[error("lag {lag} has zero autocovariance in both groups; weight undefined")]
    DegenerateLag { lag: usize },

    #[error("no lag carries a covariance discrepancy; model cannot be trained")]
    UntrainableModel,

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON")]
    Json(#[from] serde_json::Error),
}

impl VpcError {
    /// True for errors caused by malformed input or arguments rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            VpcError::InvalidArgument(_)
                | VpcError::Parse { .. }
                | VpcError::Io { .. }
                | VpcError::Json(_)
        )
    }
}

pub type Result<T, E = VpcError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> VpcError {
    VpcError::InvalidArgument(msg.into())
}
