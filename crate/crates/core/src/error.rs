use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its documented range.
    #[error("invalid {name}: {reason}")]
    Invalid { name: String, reason: String },

    /// An operation called outside its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} did not converge after {iterations} iterations (last change {last_change:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    /// A model error raised while simulating a period.
    #[error("period {period}: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { name: name.into(), reason: reason.into() }
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn at_period(self, period: usize) -> Self {
        Error::Period { period, source: Box::new(self) }
    }

    /// Process exit code for this error: 2 config, 3 model, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
