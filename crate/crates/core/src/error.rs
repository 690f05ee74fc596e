use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state overflow at step {step}: |x| exceeded 1e150")]
    Overflow { step: usize },

    #[error("trajectory too short: need observation {required}, have {available}")]
    Horizon { required: usize, available: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("degenerate moment matrix: {0}")]
    DegenerateMoment(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Dimension(_)
                | Error::Horizon { .. }
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::UnknownPreset(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
