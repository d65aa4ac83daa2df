use crate::types::SolveTrace;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input value lies outside the physical domain (negative distance,
    /// zero-norm channel, empty cluster, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix or vector dimensions are inconsistent with the network layout.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An operation was called before the state it needs was established,
    /// e.g. rate evaluation before noise powers were assigned.
    #[error("state error: {0}")]
    State(String),

    /// A linear-algebra step failed (singular system, no bisection bracket,
    /// rank-deficient stack, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The objective became non-finite during a solve; the partial trace is
    /// attached for post-mortem inspection.
    #[error("non-finite objective at sweep {iter}")]
    NonFinite { iter: usize, trace: Box<SolveTrace> },

    /// Solver preconditions were violated (infeasible initialization,
    /// stream request exceeding antenna counts, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A channel file or configuration file could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    /// An algorithm tag on the command line or in a file is not recognized.
    #[error("unknown algorithm tag: {0}")]
    UnknownAlgorithm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
