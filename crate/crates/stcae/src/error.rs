use crate::config::ConfigError;
use crate::dataset::DataError;
use crate::report::ReportError;

/// Top-level failure with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input data, configuration or arguments. Exit code 2.
    #[error("{0}")]
    Data(String),
    /// Training produced a non-finite loss or gradient. Exit code 3.
    #[error("{0}")]
    Divergence(String),
    /// Checkpoint unreadable or inconsistent with the model. Exit code 4.
    #[error("{0}")]
    Checkpoint(String),
    /// Anything else, such as failing to write outputs. Exit code 1.
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<stcae_core::Error> for CliError {
    fn from(e: stcae_core::Error) -> Self {
        use stcae_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::NonFiniteGradient { .. } => CliError::Divergence(e.to_string()),
            E::Checkpoint(_) => CliError::Checkpoint(e.to_string()),
            E::VideoTooShort { .. } | E::EmptyDataset | E::DegenerateLabels | E::UnknownVariant(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Other(e.to_string()),
        }
    }
}
