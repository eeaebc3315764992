use std::fmt;

use marstag::archive::ArchiveError;
use marstag::calibration::CalibrationError;
use marstag::datasets::DatasetError;
use marstag::grid::GridError;
use marstag::landmarking::LandmarkError;
use marstag::models::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    MissingInput,
    NonConvergence,
}

impl ErrorKind {
    pub fn class(self) -> &'static str {
        match self {
            ErrorKind::Config => "CONFIG_ERROR",
            ErrorKind::Data => "DATA_ERROR",
            ErrorKind::MissingInput => "MISSING_INPUT",
            ErrorKind::NonConvergence => "NONCONVERGENCE",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data | ErrorKind::MissingInput => 3,
            ErrorKind::NonConvergence => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::MissingInput,
            message: message.into(),
        }
    }

    /// Adds the failing stage as a prefix.
    pub fn during(mut self, stage: &str) -> Self {
        self.message = format!("{stage}: {}", self.message);
        self
    }
}

/// Single line: `<CLASS> <message>` with newlines flattened.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.class(), self.message.replace(['\n', '\r'], " "))
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! data_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e.to_string())
            }
        }
    )*};
}

data_error_from!(ArchiveError, CalibrationError, ModelError, LandmarkError, GridError);

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidFractions(_) | DatasetError::InvalidSpec(_) => CliError::config(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io error: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_is_one_line() {
        let e = CliError::config("tau 1.5\noutside (0, 1]");
        assert_eq!(e.to_string(), "CONFIG_ERROR tau 1.5 outside (0, 1]");
        assert_eq!(e.kind.exit_code(), 2);
        assert_eq!(CliError::missing("x").kind.exit_code(), 3);
    }

    #[test]
    fn fraction_errors_are_config_errors() {
        let e: CliError = DatasetError::InvalidFractions("sum".into()).into();
        assert_eq!(e.kind, ErrorKind::Config);
        let e: CliError = DatasetError::EmptyDataset.into();
        assert_eq!(e.kind, ErrorKind::Data);
    }
}
