use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint has bad magic bytes {found:?}, expected \"DMF1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported checkpoint format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: &'static str },

    #[error("checkpoint parameter count mismatch: architecture expects {expected}, file declares {actual}")]
    CountMismatch { expected: usize, actual: usize },

    #[error("checkpoint is malformed: {0}")]
    Malformed(String),

    #[error("wrong checkpoint kind: expected {expected}, found {found}")]
    Kind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
