use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Variants fall into three families which the CLI maps onto exit codes:
/// domain failures (bad input, violated preconditions), hypothesis
/// violations, and numerical-health failures (the linear algebra produced
/// something the theory forbids).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("letter {letter} out of range for d = {d}")]
    Letter { letter: usize, d: usize },

    #[error("defining relation violated: residual {residual:e} exceeds tolerance {tol:e}")]
    Relation { residual: f64, tol: f64 },

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("matrix is singular within tolerance (min eigenvalue {0:e})")]
    Singular(f64),

    #[error("matrix is not a projection (deviation {0:e})")]
    NotProjection(f64),

    #[error("projection is not co-invariant (residual {0:e}); it is not the support of an invariant state")]
    CoInvariance(f64),

    #[error("state is not invariant under the predual map (residual {0:e})")]
    NotInvariant(f64),

    #[error("state is not faithful (min eigenvalue {0:e}); compress the system to the support first")]
    NotFaithful(f64),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("peripheral eigenvalues are not a finite subgroup of the circle: {0}")]
    NotFiniteSubgroup(String),

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error("numerical health check failed: {0}")]
    NumericalHealth(String),
}

impl Error {
    /// True for failures that indicate a breakdown of the numerics rather
    /// than bad input.
    pub fn is_numerical_health(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_) | Error::NumericalHealth(_) | Error::NotFiniteSubgroup(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
