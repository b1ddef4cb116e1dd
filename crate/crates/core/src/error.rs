use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Input values that violate a documented precondition (ranges, sums,
    /// sizes). The message names the offending quantity.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Requested energies fall outside a tabulated range.
    #[error("energy coverage: {0}")]
    Coverage(String),

    /// Two quantities that must share an energy grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A covariance that must admit a Cholesky factorization does not.
    #[error("{context}: covariance is not positive definite")]
    NotPositiveDefinite { context: String },

    /// A mean count or variance collapsed to a value the model cannot use.
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// An internal cross-check failed (e.g. a lower bound exceeding an upper
    /// bound beyond numerical slack). Indicates a bug or a broken input, never
    /// silently repaired.
    #[error("consistency: {0}")]
    Consistency(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Wraps `self` with a higher-level context line, preserving the chain.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn ctx(self, context: impl Into<String>) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn ctx(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.context(context))
    }
}
