use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: dgpe_core::Error,
    },
    #[error("corrupt catalog record {path}: {reason}")]
    CorruptRecord { path: String, reason: String },
    #[error("output error: {0}")]
    Output(String),
}

impl RunError {
    /// Process exit status: 2 config, 3 numerical, 4 contract violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core { source, .. } if source.is_numerical() => 3,
            RunError::CorruptRecord { .. } => 3,
            RunError::Core { .. } | RunError::Output(_) => 4,
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for dgpe_core::Result<T> {
    fn context(self, what: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Core {
            context: what.to_string(),
            source,
        })
    }
}
