use thiserror::Error;

/// Errors raised by the numerics and verification layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("trace {0} is not 1")]
    TraceNotUnit(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("matrix is not unitary (max |U U^dagger - I| = {0:e})")]
    NotUnitary(f64),

    #[error("Kraus operators are not trace preserving (completeness defect {0:e})")]
    NotTracePreserving(f64),

    #[error("Kraus operator {0} maps a diagonal state to a coherent one")]
    NotIncoherent(usize),

    #[error("state is not diagonal (largest off-diagonal modulus {0:e})")]
    NotDiagonal(f64),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("unsupported solver configuration: {0}")]
    UnsupportedSolver(String),

    #[error("unknown theorem id `{0}`")]
    UnknownTheorem(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
}

pub type Result<T> = std::result::Result<T, Error>;
