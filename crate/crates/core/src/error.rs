use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("total dimension {requested} exceeds the configured maximum of {max}")]
    DimensionOverflow { requested: usize, max: usize },

    #[error("operator is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |U^dagger U - 1| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("state is not normalized (|psi|^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("invalid spin {0}: 2j must be a nonnegative integer")]
    InvalidSpin(f64),

    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coefficient matching is underdetermined: {0}")]
    Underdetermined(&'static str),

    #[error("orientation undefined for this estimator: <Jz> = {0} is not positive")]
    OrientationUndefined(f64),

    #[error("branch `{label}` is empty (weight {weight:e})")]
    EmptyBranch { label: &'static str, weight: f64 },

    #[error("inconsistent bookkeeping: {0}")]
    InconsistentBookkeeping(String),

    #[error("numerical invariant violated: {0}")]
    InvariantViolation(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures that indicate a broken numerical invariant rather than bad input.
    pub fn is_invariant_failure(&self) -> bool {
        matches!(
            self,
            Error::InvariantViolation(_) | Error::InconsistentBookkeeping(_)
        )
    }
}
