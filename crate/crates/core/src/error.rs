use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("inconsistent schedule at slot {slot}: {reason}")]
    InconsistentSchedule { slot: u64, reason: String },

    /// A push-sum weight left the positive orthant. Must be unreachable.
    #[error("protocol violation at node {node}, slot {slot}: {reason}")]
    ProtocolViolation {
        node: usize,
        slot: u64,
        reason: String,
    },

    #[error("non-finite gradient at node {node}, slot {slot}")]
    NonFiniteGradient { node: usize, slot: u64 },

    #[error("verification failure: identity `{identity}` at slot {slot} (residual {residual:e})")]
    Verification {
        identity: String,
        slot: u64,
        residual: f64,
    },

    #[error("reference solver: {0}")]
    ReferenceSolver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("run {run} (seed {seed:#018x}) failed: {source}")]
    RunFailed {
        run: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by bad input rather than by a failed run.
    pub fn is_configuration(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::InvalidTopology(_)
            | Error::Parse(_)
            | Error::Json(_)
            | Error::Io(_) => true,
            Error::RunFailed { source, .. } => source.is_configuration(),
            _ => false,
        }
    }
}
