use thiserror::Error;

/// Failure of a CLI stage, carrying the stage name for the message.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: invalid configuration: {message}")]
    Config { stage: &'static str, message: String },

    #[error("{stage}: {source}")]
    Library { stage: &'static str, source: pnpmm::Error },

    #[error("{stage}: {message}")]
    Io { stage: &'static str, message: String },

    /// A diagnostic check ran and failed.
    #[error("{stage}: check failed: {message}")]
    Check { stage: &'static str, message: String },
}

impl CliError {
    pub fn config(stage: &'static str, message: impl Into<String>) -> Self {
        CliError::Config { stage, message: message.into() }
    }

    pub fn io(stage: &'static str, err: impl std::fmt::Display) -> Self {
        CliError::Io { stage, message: err.to_string() }
    }

    /// 2 configuration, 3 numeric or domain, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use pnpmm::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 4,
            CliError::Check { .. } => 3,
            CliError::Library { source, .. } => match source {
                E::Config(_) | E::Dimension(_) => 2,
                E::Io(_) | E::Format(_) => 4,
                E::Domain(_) | E::DegenerateOperator { .. } | E::SingularAnchor { .. } | E::UndefinedMetric(_) => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a stage name to library errors.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for pnpmm::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Library { stage, source })
    }
}
