use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("covariate distribution has no finite support")]
    NotEnumerable,

    #[error("exact enumeration is limited to p <= {max}, got p = {p}")]
    TooManyCovariates { p: usize, max: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("{failed} of {reps} replicate fits did not converge (limit is < 1%)")]
    ExcessiveNonConvergence { failed: u64, reps: u64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps the error with a short description of what was being computed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by numerics rather than by invalid input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::RankDeficient
            | Error::Degenerate(_)
            | Error::ExcessiveNonConvergence { .. } => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
