use thiserror::Error;

/// Errors produced by the lattice toolkit.
#[derive(Debug, Error)]
pub enum LatticeError {
    /// A conditional or marginal up-probability left [0, 1] beyond tolerance.
    #[error("model infeasible for asset {asset}: probability {value} outside [0, 1]")]
    Infeasible { asset: usize, value: f64 },

    /// The asset-correlation terms alone already exhaust the probability budget.
    #[error("constraint set for asset {asset} is empty: correlation terms use {used} of the 1/2 budget")]
    EmptyConstraintSet { asset: usize, used: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("enumeration of {paths} paths exceeds the cap of {cap}")]
    EnumerationTooLarge { paths: u128, cap: u128 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("correlation undefined: series {0} has zero variance")]
    UndefinedCorrelation(usize),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("row {row}: nonpositive price {value} in column '{column}'")]
    NonPositivePrice { row: usize, column: String, value: f64 },

    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: String },

    #[error("row {row}: date {date} is not after the previous row")]
    UnorderedDate { row: usize, date: String },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    Parse { row: usize, column: String, value: String },

    #[error("malformed price file: {0}")]
    MalformedCsv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LatticeError {
    /// True for errors that describe a well-formed but infeasible model, as
    /// opposed to malformed input.
    pub fn is_semantic(&self) -> bool {
        matches!(
            self,
            LatticeError::Infeasible { .. }
                | LatticeError::EmptyConstraintSet { .. }
                | LatticeError::Solver(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LatticeError>;
