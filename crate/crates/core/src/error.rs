use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {cells} cells requested, at least 2 required")]
    InvalidMesh { cells: usize },

    #[error("invalid matrix `{name}`: {reason}")]
    InvalidMatrix { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coefficient not positive: kappa({t}, {x}) = {value}")]
    Ellipticity { t: f64, x: f64, value: f64 },

    #[error("form is not elliptic: {0}")]
    NotElliptic(String),

    #[error("time {t} outside of [{a}, {b}]")]
    OutOfDomain { t: f64, a: f64, b: f64 },

    #[error("time step {step} failed: step matrix is singular")]
    StepFailure { step: usize },

    #[error("pointwise set `{kind}` requires a lumped (diagonal) H-Gram matrix")]
    GeometryMismatch { kind: &'static str },

    #[error("grid of {steps} steps cannot be split into {parts} equal parts")]
    GridMismatch { steps: usize, parts: usize },

    #[error("picard iteration stopped contracting on slab {slab} (ratio {ratio:.3} at iteration {iteration}); use shorter slabs")]
    ContractionFailure {
        slab: usize,
        iteration: usize,
        ratio: f64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invariance violated at step {step}: distance {violation:e}")]
    InvarianceViolation { step: usize, violation: f64 },

    #[error("slope of nonlinearity is unbounded on [{lo}, {hi}]")]
    UnboundedSlope { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
