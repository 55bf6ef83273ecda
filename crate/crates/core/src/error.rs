use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has {found} samples, grid has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite sample at node {0}")]
    NonFinite(usize),
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("singular system: pivot {pivot:e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },
    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("damped step collapsed at iteration {iteration} (residual {residual:e})")]
    StepCollapse { iteration: usize, residual: f64 },
    #[error("invalid metric profile: {0}")]
    InvalidMetric(String),
    #[error("invalid twist profile: {0}")]
    InvalidTwist(String),
    #[error("class mismatch: L + A - 2 = {defect:e}")]
    ClassMismatch { defect: f64 },
    #[error("ricci potential equation is not solvable: slope defect {defect:e}")]
    SolvabilityDefect { defect: f64 },
    #[error("metric lost positivity at node {node}")]
    PositivityLoss { node: usize },
    #[error("unnormalized flow is approaching extinction at t = {time}")]
    ExtinctionApproached { time: f64 },
    #[error("time step {0} outside (0, 0.5]")]
    InvalidTimeStep(f64),
    #[error("conjugate mass drifted by {drift:e}")]
    MassDrift { drift: f64 },
    #[error("density w lost positivity")]
    NegativeDensity,
    #[error("radius {radius} exceeds half the meridian length {limit}")]
    RadiusTooLarge { radius: f64, limit: f64 },
    #[error("fit window too noisy: R^2 = {r_squared}")]
    WindowTooNoisy { r_squared: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
