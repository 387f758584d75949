//! Command-line error taxonomy mapped onto process exit codes:
//! 0 success, 2 format or I/O error, 3 numerical failure, 4 config error.

use ovbs_core::batch::BatchError;
use ovbs_core::datagen::ScenarioError;
use ovbs_core::model::ModelError;
use ovbs_core::online::TrackerError;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or incomplete configuration (missing keys, bad values,
    /// violated guards).
    Config(String),
    /// Malformed input file; carries the 1-based line when known.
    Format { path: String, line: Option<usize>, message: String },
    /// Underlying I/O failure.
    Io { path: String, message: String },
    /// Numerical failure during inference; carries the failing sample index
    /// when one is in flight.
    Numerical { message: String, sample: Option<usize> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 4,
            Self::Format { .. } | Self::Io { .. } => 2,
            Self::Numerical { .. } => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn format(path: &std::path::Path, line: Option<usize>, message: impl Into<String>) -> Self {
        Self::Format { path: path.display().to_string(), line, message: message.into() }
    }

    pub fn numerical(err: TrackerError, sample: Option<usize>) -> Self {
        Self::Numerical { message: err.to_string(), sample }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config error: {msg}"),
            Self::Format { path, line: Some(line), message } => {
                write!(f, "format error in {path} line {line}: {message}")
            }
            Self::Format { path, line: None, message } => {
                write!(f, "format error in {path}: {message}")
            }
            Self::Io { path, message } => write!(f, "io error on {path}: {message}"),
            Self::Numerical { message, sample: Some(sample) } => {
                write!(f, "numerical failure at sample {sample}: {message}")
            }
            Self::Numerical { message, sample: None } => {
                write!(f, "numerical failure: {message}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        Self::Numerical { message: e.to_string(), sample: None }
    }
}
