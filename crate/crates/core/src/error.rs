use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("joint {joint:?}: angle {angle_rad} rad outside limits [{min_rad}, {max_rad}]")]
    Domain {
        joint: Option<usize>,
        angle_rad: f64,
        min_rad: f64,
        max_rad: f64,
    },

    #[error("tendon length {length_mm} mm is geometrically unreachable (arcsin argument {argument})")]
    OutOfRange { length_mm: f64, argument: f64 },

    #[error("expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("tendon command unreachable: {0}")]
    Unreachable(String),

    #[error("statics did not converge after {iterations} iterations (max residual {max_residual} N*mm)")]
    MaxIterationsExceeded {
        iterations: usize,
        max_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("joint {joint}: solved angle {angle_rad} rad violates the joint limits")]
    LimitViolation { joint: usize, angle_rad: f64 },

    #[error("payload direction search did not converge (best E = {best_error} rad at {best_direction} rad)")]
    NoConvergence {
        best_direction: f64,
        best_error: f64,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("sample budget exceeded: {requested} > {budget}")]
    BudgetExceeded { requested: u64, budget: u64 },

    #[error("occupancy grids do not match: {0}")]
    MismatchedGrids(String),

    #[error("history was recorded with a different robot configuration")]
    ConfigMismatch,

    #[error("actuation pack busy: {0}")]
    SelectorBusy(String),

    #[error("invalid motion step: {0}")]
    InvalidStep(String),

    #[error("root bracketing failed: {0}")]
    Bracket(String),
}
