use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: unknown bus {bus}")]
    UnknownBus { line: usize, bus: u32 },

    #[error("line {line}: duplicate {what} {id}")]
    DuplicateId {
        line: usize,
        what: &'static str,
        id: String,
    },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("case is not runnable: {0}")]
    InvalidCase(String),

    #[error("branch {from}-{to} has zero impedance")]
    ZeroImpedance { from: u32, to: u32 },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    Diverged { iterations: usize, mismatch: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unknown element {0}")]
    UnknownElement(usize),

    #[error("fault on bus {bus} overlaps an existing fault")]
    OverlappingFault { bus: u32 },

    #[error("schedule rejected: {0}")]
    Schedule(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("numerical failure at t = {time:.6} s: {msg}")]
    Numerical { time: f64, msg: String },

    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax",
            Error::UnknownBus { .. } => "unknown_bus",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::InvalidValue(_) => "invalid_value",
            Error::InvalidCase(_) => "invalid_case",
            Error::ZeroImpedance { .. } => "zero_impedance",
            Error::Diverged { .. } => "diverged",
            Error::Singular(_) => "singular",
            Error::UnknownElement(_) => "unknown_element",
            Error::OverlappingFault { .. } => "overlapping_fault",
            Error::Schedule(_) => "schedule",
            Error::Scenario(_) => "scenario",
            Error::Numerical { .. } => "numerical",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }
}
