use dpms_core::Error as CoreError;
use thiserror::Error;

/// Failure classes; the process exit code is part of the interface.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable input, malformed rows, out-of-bound data. Exit 1.
    #[error("{0}")]
    Data(String),
    /// Bad flags, bad config file, inconsistent parameters. Exit 2.
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Config(_) => 2,
        }
    }

    /// Classifies a library error. Bound violations are reported against
    /// `names` with 1-based data rows.
    pub fn from_core(e: CoreError, names: &[String]) -> Self {
        match e {
            CoreError::BoundViolation {
                row,
                column,
                value,
                bound,
            } => {
                let what = match column {
                    Some(j) => names
                        .get(j)
                        .map(|n| format!("covariate {n:?}"))
                        .unwrap_or_else(|| format!("covariate {}", j + 1)),
                    None => "response".to_string(),
                };
                CliError::Data(format!(
                    "data row {}: {what} is {value}, outside [-{bound}, {bound}]",
                    row + 1
                ))
            }
            CoreError::Csv { .. }
            | CoreError::DimensionMismatch(_)
            | CoreError::DegenerateFit(_)
            | CoreError::Input(_) => CliError::Data(e.to_string()),
            CoreError::InvalidParameter(_)
            | CoreError::ZeroWidthRange(_)
            | CoreError::EmptyCandidates
            | CoreError::IndexOutOfRange { .. }
            | CoreError::DimensionOutOfRange { .. }
            | CoreError::MissingColumn(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::from_core(e, &[])
    }
}
