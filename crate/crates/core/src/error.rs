use thiserror::Error;

/// Errors produced by the simulator.
///
/// The variants are coarse on purpose: callers (the CLI in particular) map
/// them onto exit codes through [`Error::is_config`].
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or an inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical domain violation, such as a division by zero.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke a shape contract (dimension mismatch, odd length).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Power normalization of an all-zero vector.
    #[error("cannot normalize an all-zero vector")]
    ZeroPower,
    /// A covariance that should be positive semi-definite is not.
    #[error("numerical rank error: {0}")]
    NumericalRank(String),
    /// Oversize or malformed prompt frame.
    #[error("frame error: {0}")]
    Frame(String),
    /// Malformed entropy-coded stream.
    #[error("decode error: {0}")]
    Decode(String),
    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: {detail}")]
    Training { step: usize, detail: String },
    /// Parsing of an on-disk artifact failed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True when the error stems from user-supplied configuration rather than
    /// from a runtime or numerical failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse(_) => true,
            Error::Trial { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
