use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid circulations: {0}")]
    InvalidCirculations(String),

    #[error("coupling matrix is singular or ill-conditioned (inverse residual {residual:e})")]
    SingularCoupling { residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not skew-Hermitian (deviation {deviation:e})")]
    NotSkewHermitian { deviation: f64 },

    #[error("vortices {i} and {j} collide (distance {distance:e})")]
    Collision { i: usize, j: usize, distance: f64 },

    #[error("hamiltonian domain error: {0}")]
    Domain(String),

    #[error("zero-total-circulation reduction needs zero linear impulse, found |I| = {impulse:e}")]
    NonzeroImpulse { impulse: f64 },

    #[error("point is outside the open set of non-vanishing entries: {0}")]
    NotInOpenSet(String),

    #[error("not a fixed point (residual {residual:e})")]
    NotAFixedPoint { residual: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("multiplier system is infeasible (residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("rank deficiency: expected dimension {expected}, found {found}")]
    RankDeficiency { expected: usize, found: usize },

    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    #[error("excluded parameter: {0}")]
    ExcludedParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration stopped early: {0}")]
    IntegrationAborted(String),

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the caller's input rather than by the numerics.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidCirculations(_)
                | Error::DimensionMismatch { .. }
                | Error::NotSkewHermitian { .. }
                | Error::Collision { .. }
                | Error::NonzeroImpulse { .. }
                | Error::NotAFixedPoint { .. }
                | Error::UnsupportedScenario(_)
                | Error::ExcludedParameter(_)
                | Error::InvalidArgument(_)
        )
    }
}
