use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spatial cell count must be odd, got {0}")]
    EvenSpatialGrid(usize),
    #[error("non-positive extent: {0}")]
    NonPositiveExtent(&'static str),
    #[error("velocity profile sample {index} is not positive ({value})")]
    NonPositiveProfile { index: usize, value: f64 },
    #[error("velocity profile table is not symmetric at cell {index}")]
    AsymmetricProfile { index: usize },
    #[error("profile table has {found} values, expected {expected}")]
    ProfileLength { expected: usize, found: usize },
    #[error("state entry ({species}, {i}, {j}) is not strictly positive")]
    NonPositiveState { species: usize, i: usize, j: usize },
    #[error("state shape {found:?} does not match mesh shape {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("invalid scheme parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("Picard iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    PicardDiverged { iterations: usize, residual: f64 },
    #[error("initial state violates the declared sandwich bounds by {violation:e}")]
    BoundsRejected { violation: f64 },
    #[error("singular periodic transport system at velocity cell {j}")]
    SingularTransportSolve { j: usize },
    #[error("the discrete Poisson problem requires an odd cell count, got {0}")]
    EvenGridUnsupported(usize),
    #[error("decay fit requires strictly positive values (index {0})")]
    NonPositiveSeries(usize),
    #[error("decay fit window has {0} points, at least 5 are required")]
    WindowTooShort(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
