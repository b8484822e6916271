use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error("eigenvalue {re} {im:+}i has no conjugate partner")]
    UnpairedComplex { re: f64, im: f64 },

    #[error("no real eigenvalue equals 1 (a doubly stochastic matrix always has one)")]
    MissingUnitEigenvalue,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Sinkhorn balancing did not converge within {max_iter} sweeps")]
    NotConverged { max_iter: usize },

    #[error("entry ({row}, {col}) = {value} is not strictly positive")]
    NonPositiveInput { row: usize, col: usize, value: f64 },

    #[error("matrix contains non-finite entries")]
    NonFiniteInput,

    #[error("QR iteration failed to deflate an eigenvalue within {iterations} iterations")]
    SchurFailure { iterations: usize },

    #[error("2x2 Schur block at index {index} has real eigenvalues")]
    DegenerateBlock { index: usize },

    #[error("matrix is numerically singular")]
    SingularInput,

    #[error("Sylvester equation is singular: spectra overlap (divisor {divisor:e})")]
    SpectraOverlap { divisor: f64 },

    #[error("W entry at ({row}, {col}) is too close to zero")]
    ZeroDenominator { row: usize, col: usize },

    #[error("CG breakdown: curvature {curvature:e}")]
    CgBreakdown { curvature: f64 },

    #[error("eigenvalue clusters are interleaved in the Schur form (block {block})")]
    InterleavedCluster { block: usize },

    #[error("Schur factors do not reconstruct the matrix: mismatch {mismatch:e}")]
    ReconstructionMismatch { mismatch: f64 },

    #[error("point invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
