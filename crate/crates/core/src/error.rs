use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unsupported derivative order {0} (supported: 1, 2, 3)")]
    UnsupportedOrder(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate dispersion: a3({t}, {x}) = {value} ({reason})")]
    DegenerateDispersion {
        t: f64,
        x: f64,
        value: f64,
        reason: &'static str,
    },

    #[error("inconsistent derivative for {name}: relative mismatch {mismatch:.3e} exceeds {tolerance:.1e}")]
    InconsistentDerivative {
        name: String,
        mismatch: f64,
        tolerance: f64,
    },

    #[error("under-resolved: {0}")]
    Resolution(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("window violation: {0}")]
    Window(String),

    #[error("singular linear system at row {row} (t = {t})")]
    SingularSystem { row: usize, t: f64 },

    #[error("initial data not confined: boundary mass fraction {fraction:.3e} exceeds {limit:.1e}")]
    BoundaryMass { fraction: f64, limit: f64 },

    #[error("non-monotone straightening table near x = {x}")]
    NonMonotone { x: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,
}

pub type Result<T> = std::result::Result<T, Error>;
