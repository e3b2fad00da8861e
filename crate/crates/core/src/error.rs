use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid weight {weight} at atom {index}")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("non-finite location at atom {index}")]
    NonFiniteLocation { index: usize },
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("measures have different total masses ({0} vs {1})")]
    MassMismatch(f64, f64),
    #[error("too many atoms for exact transport: {0} (limit {1})")]
    TooLarge(usize, usize),
    #[error("order p must be at least 1, got {0}")]
    InvalidOrder(f64),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("unknown measure preset: {0}")]
    UnknownPreset(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("{functional} does not provide {capability}")]
    Unsupported { functional: String, capability: &'static str },
    #[error("arity mismatch: outer function takes {outer}, {inner} inner functions given")]
    Arity { outer: usize, inner: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown builtin: {0}")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("non-finite particle state at step {step}, particle {particle}")]
    NonFinite { step: usize, particle: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("time {time} is not on the step grid (dt = {dt})")]
    OffGrid { time: f64, dt: f64 },
    #[error("flow already reached the end of the noise path")]
    PathExhausted,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected a probability measure, total mass is {0}")]
    NotProbability(f64),
    #[error("unknown model: {0}")]
    UnknownModel(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle supports dimension 1 only, got {0}")]
    Dimension(usize),
    #[error("stability bound violated: sigma^2 dt / dx^2 = {ratio:.4} > {limit}")]
    Cfl { ratio: f64, limit: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("model does not have the required structure: {0}")]
    Model(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}
