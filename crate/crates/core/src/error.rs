use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("boundary mesh cannot be reconciled with the bulk mesh: {0}")]
    GammaSync(String),

    #[error("unsupported discretization scheme: {0}")]
    UnsupportedScheme(String),

    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("the multiplier space is empty")]
    EmptyMultiplier,

    #[error("estimator did not reach the tolerance within {rounds} refinement rounds at t = {t}")]
    NoConvergence { rounds: usize, t: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the failure originates from the numerics rather than from
    /// user input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solver(_)
                | Error::Eigen(_)
                | Error::NoConvergence { .. }
                | Error::NotNested(_)
                | Error::MeshInvariant(_)
                | Error::GammaSync(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
