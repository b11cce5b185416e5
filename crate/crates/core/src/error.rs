use thiserror::Error;

pub type Result<T> = std::result::Result<T, FibrateError>;

#[derive(Debug, Error)]
pub enum FibrateError {
    #[error("denominator I2(u) vanishes (|I2| = {0:e})")]
    ZeroDenominator(f64),
    #[error("field is outside the fiber domain D")]
    NotInD,
    #[error("degenerate fiber: psi''(t0) = {0:e} is numerically zero")]
    DegenerateFiber(f64),
    #[error("degenerate Nehari point: J'(v)v = {0:e} is numerically zero")]
    DegenerateNehari(f64),
    #[error("degree ordering violated: {0}")]
    BadDegrees(String),
    #[error("invalid grid specification: {0}")]
    BadSpec(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("iteration failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error("operation requires a radial grid")]
    NotRadial,
    #[error("iterate left D after {0} step halvings")]
    LeftD(usize),
    #[error("maximum iterations ({0}) reached")]
    MaxIters(usize),
    #[error("level index {0} outside 1..=6")]
    BadLevel(usize),
    #[error("no sample of the surrogate sphere lies in D")]
    SamplerOutOfD,
    #[error("malformed field file: {0}")]
    FormatError(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
