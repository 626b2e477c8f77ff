use thiserror::Error;

/// Errors raised by fitting, integration and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("need at least 2 sample points, got {0}")]
    EmptySample(usize),
    #[error("coordinate {value} of point {point} (column {column}) lies outside [0, 1]")]
    OutOfDomain {
        point: usize,
        column: usize,
        value: f64,
    },
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("bandwidth grid is empty or contains a non-positive value")]
    EmptyGrid,
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("quadrature grid with {nodes} nodes exceeds the 10^7 node limit")]
    GridTooLarge { nodes: f64 },
    #[error("dimension {0} is not supported (1..=4)")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("alpha must not be 0 or 1 (the power-integral variance also excludes 0.5), got {0}")]
    BadAlpha(f64),
    #[error("exponents (a = {a}, b = {b}) must satisfy a + b = 1 and a, b not in {{0, 1}}")]
    BadExponents { a: f64, b: f64 },
    #[error("influence variances vanish (f = g); the asymptotic interval is undefined")]
    DegenerateCase,
    #[error("invalid functional specification: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
