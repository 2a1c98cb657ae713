use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A data entry lies outside its declared bound. `row` and `column` are
    /// zero-based; `column` is `None` for the response.
    #[error("{} at row {row} is {value}, outside [-{bound}, {bound}]", column.map(|c| format!("covariate {c}")).unwrap_or_else(|| "response".to_string()))]
    BoundViolation {
        row: usize,
        column: Option<usize>,
        value: f64,
        bound: f64,
    },

    #[error("rescale range for {0} has zero width")]
    ZeroWidthRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("covariate index {index} out of range 1..={d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("dimension d = {d} outside supported range 1..={max}")]
    DimensionOutOfRange { d: usize, max: usize },

    /// Residual sum of squares is zero (or numerically so); the profile
    /// likelihood diverges.
    #[error("degenerate fit: residual sum of squares {0} is not positive")]
    DegenerateFit(f64),

    #[error("column {0:?} not found in input header")]
    MissingColumn(String),

    #[error("csv input, data row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("{0}")]
    Input(String),
}
