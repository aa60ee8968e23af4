use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("interval [{start}, {end}] is reversed")]
    ReversedInterval { start: f64, end: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("truncation size {n} is smaller than band limit {band}")]
    TruncationTooSmall { n: usize, band: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("closed form of B* is only displayed for classes I and III; use the numeric conjugation for class {0}")]
    NoClosedForm(&'static str),

    #[error("diagonal scaling entry d_{index} is zero")]
    ZeroScaling { index: usize },

    #[error("invalid scaling parameter delta = {0}; need delta > 1")]
    InvalidDelta(f64),

    #[error(
        "size S = {size} exceeds the exhaustive sign-pattern limit {limit}; \
         use the heuristic (few sign changes) search mode"
    )]
    ExhaustiveTooLarge { size: usize, limit: usize },

    #[error("size S = {size} too small for band {band}; need S >= R + 2")]
    SizeTooSmall { size: usize, band: usize },

    #[error("no certificate possible: {0}")]
    Uncertifiable(String),

    #[error("empty delta grid")]
    EmptyGrid,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("tolerance {0} outside [1e-12, 1e-6]")]
    Tolerance(f64),

    #[error("step size underflow on segment [{start}, {end}] (h = {step:e}); system too stiff for explicit integration")]
    StepUnderflow { start: f64, end: f64, step: f64 },

    #[error("stiffness limit exceeded: L * t_end = {product} > {limit}")]
    StiffnessLimit { product: f64, limit: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
