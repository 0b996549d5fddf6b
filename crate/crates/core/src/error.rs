use thiserror::Error;

/// Errors raised by the analysis toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("jet order {requested} exceeds the available order {available}")]
    OrderExceeded { requested: usize, available: usize },

    #[error("no branch of the field covers the point {0:?}")]
    NoBranch(Vec<f64>),

    #[error("projection did not converge: {0}")]
    NoConvergence(String),

    #[error("gradient vanished at {0:?}")]
    ZeroGradient(Vec<f64>),

    #[error("no boundary found in the sampling region")]
    NoBoundary,

    #[error("finite-difference stencil leaves the collar (distance {distance} + stencil {extent} >= reach {reach})")]
    StencilOutsideCollar {
        distance: f64,
        extent: f64,
        reach: f64,
    },

    #[error("point is outside the collar: distance {distance} >= width {width}")]
    OutsideCollar { distance: f64, width: f64 },

    #[error("pole guard violated: |1 + s*kappa| = {0:e}")]
    PoleGuard(f64),

    #[error("eigen-gap {gap:e} below threshold {threshold:e}")]
    EigenGap { gap: f64, threshold: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("extrapolation failure: {0}")]
    Extrapolation(String),

    #[error("point {0:?} is not covered by the partition of unity")]
    Uncovered(Vec<f64>),

    #[error("support leaks outside the truncation box (|u| = {0:e} on its boundary)")]
    SupportLeak(f64),

    #[error("hypothesis failed: {0}")]
    Hypothesis(String),

    #[error("insufficient radial span: max/min radius ratio {0:.3} below 10")]
    InsufficientSpan(f64),

    #[error("no admissible cover radius above the floor {0}")]
    NoAdmissibleRadius(f64),

    #[error("domain spec, line {line}: {message}")]
    SpecFile { line: usize, message: String },

    #[error("field validation failed: cross-branch disagreement {disagreement:e} > {tol:e}")]
    Validation { disagreement: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
