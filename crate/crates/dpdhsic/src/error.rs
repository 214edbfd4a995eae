use std::path::PathBuf;

/// Malformed file content, located by 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: u64,
    pub message: String,
}

impl ParseError {
    pub fn new(line: u64, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Errors surfaced by the file formats, the harness and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },

    #[error(transparent)]
    Core(#[from] dpdhsic_core::Error),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, source: ParseError) -> Self {
        Self::Parse {
            path: path.into(),
            source,
        }
    }

    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 2 for usage, configuration and input problems,
    /// 3 for I/O failures, 4 for size guards.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 3,
            Self::Core(dpdhsic_core::Error::TooLarge { .. }) => 4,
            _ => 2,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
