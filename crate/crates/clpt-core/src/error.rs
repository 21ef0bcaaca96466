//! Error type shared by all modules of the crate.

/// Errors produced by landscape construction, expansion, tracing and sampling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A protocol value violates the hard bound |s| <= 1.
    #[error("protocol value s[{index}] = {value:e} outside [-1, 1]")]
    ProtocolOutOfBounds { index: usize, value: f64 },

    /// Protocols must discretize time into at least two steps.
    #[error("protocol needs at least 2 steps, got {0}")]
    TooFewSteps(usize),

    /// Negative horizons are meaningless.
    #[error("protocol duration must be nonnegative, got {0}")]
    NegativeHorizon(f64),

    /// A vector argument does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// State passed to `dualize_state` is not normalized.
    #[error("state norm {0} deviates from 1 beyond 1e-12")]
    NotNormalized(f64),

    /// The logarithm-resummed series is only defined on the principal branch.
    #[error("cumulant resummation undefined: 2/d + n_star.n0 = {0:e} is not positive")]
    CumulantBranch(f64),

    /// Root bracketing failed (no sign change on the searched interval).
    #[error("no root bracketed: {0}")]
    NoRoot(String),

    /// An ensemble-level operation received no data.
    #[error("empty ensemble")]
    EmptyEnsemble,

    /// Catch-all for invalid user-facing parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed or unsupported JSON problem description.
    #[error("problem description: {0}")]
    ProblemFormat(String),

    /// A numerical procedure failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
