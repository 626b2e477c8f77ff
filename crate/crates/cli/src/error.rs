use std::fmt;

/// A failed command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable files or malformed data (exit 2).
    Usage(String),
    /// Samples that do not fit the functional: wrong dimension, arity or
    /// size (exit 3).
    Data(String),
    /// An interval was requested but the influence variances vanish (exit 4).
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Degenerate(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ifest::Error> for CliError {
    fn from(e: ifest::Error) -> Self {
        use ifest::Error as E;
        let msg = e.to_string();
        match e {
            E::DimensionMismatch(_)
            | E::TooFewSamples { .. }
            | E::EmptySample(_)
            | E::UnsupportedDimension(_) => CliError::Data(msg),
            E::DegenerateCase => CliError::Degenerate(msg),
            E::OutOfDomain { .. } => CliError::Usage(format!("{msg} (try --rescale)")),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
