use thiserror::Error;

use crate::design::ModelId;

#[derive(Debug, Error)]
pub enum PosiError {
    #[error("row {row}, column {col}: cannot parse {cell:?} as a number")]
    NonNumeric { row: usize, col: usize, cell: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("design table is empty")]
    EmptyTable,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("design has rank 0")]
    ZeroRank,

    #[error("symmetric canonical form requires rank d = p (got d = {rank}, p = {cols})")]
    SymmetricNeedsFullRank { rank: usize, cols: usize },

    #[error("operation requires the classical case d = p (got d = {rank}, p = {cols})")]
    NotClassical { rank: usize, cols: usize },

    #[error("predictor {predictor} is not in model {model}")]
    PredictorNotInModel { predictor: usize, model: ModelId },

    #[error("column index {index} out of range for p = {cols}")]
    ColumnOutOfRange { index: usize, cols: usize },

    #[error("model {0} is rank deficient")]
    RankDeficient(ModelId),

    #[error("adjusted predictor {predictor} in model {model} has degenerate norm {norm:e}")]
    DegenerateResidual { predictor: usize, model: ModelId, norm: f64 },

    #[error("model universe is empty after rank filtering")]
    EmptyUniverse,

    #[error("no model in the universe contains predictor {0}")]
    PredictorInNoModel(usize),

    #[error("direction set is empty")]
    EmptyDirectionSet,

    #[error("model {0} is outside the universe the constant was computed for")]
    ModelOutsideUniverse(ModelId),

    #[error("invalid universe spec {spec:?}: {reason}")]
    UniverseSpec { spec: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("root finding failed: {0}")]
    NoRoot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PosiError {
    /// Errors caused by the input data rather than by how the request was phrased.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            PosiError::NonNumeric { .. }
                | PosiError::RaggedRow { .. }
                | PosiError::EmptyTable
                | PosiError::NonFinite { .. }
                | PosiError::ZeroRank
                | PosiError::RankDeficient(_)
                | PosiError::DegenerateResidual { .. }
                | PosiError::EmptyUniverse
                | PosiError::EmptyDirectionSet
                | PosiError::DimensionMismatch { .. }
                | PosiError::Io(_)
        )
    }

    /// Well-formed requests that cannot be satisfied for this design.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            PosiError::SymmetricNeedsFullRank { .. }
                | PosiError::NotClassical { .. }
                | PosiError::PredictorInNoModel(_)
                | PosiError::ModelOutsideUniverse(_)
                | PosiError::NoRoot(_)
        )
    }
}

pub type Result<T, E = PosiError> = std::result::Result<T, E>;
