use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status for command-line usage errors.
pub const EXIT_USAGE: i32 = 64;
/// Missing or invalid configuration, or invalid arguments to an operation.
pub const EXIT_CONFIG: i32 = 65;
/// Numerical failure during training or solving.
pub const EXIT_NUMERICAL: i32 = 70;
/// File system failures and unreadable files.
pub const EXIT_IO: i32 = 74;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {kind}")]
    Format { path: PathBuf, kind: FormatError },
    #[error("{0}")]
    Config(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error(transparent)]
    Core(#[from] iwgt_core::Error),
}

/// Ways a dataset, checkpoint or statistics file can be unreadable.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("corrupt: {0}")]
    Corrupt(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            kind,
        }
    }

    pub fn corrupt(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::format(path, FormatError::Corrupt(msg.into()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => EXIT_IO,
            Error::Config(_) | Error::MissingField(_) => EXIT_CONFIG,
            Error::Core(e) => match e {
                iwgt_core::Error::Numerical { .. }
                | iwgt_core::Error::DegenerateLoss(_)
                | iwgt_core::Error::UndefinedRatio => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            },
        }
    }
}
