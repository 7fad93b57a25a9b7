use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration key `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{stage} failed: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: nvraman_core::Error,
    },
}

impl CliError {
    pub fn numerical(stage: impl Into<String>) -> impl FnOnce(nvraman_core::Error) -> CliError {
        let stage = stage.into();
        move |source| CliError::Numerical { stage, source }
    }

    /// Process exit status: 1 for configuration and file problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => 2,
            _ => 1,
        }
    }
}
