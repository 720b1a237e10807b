use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("tape does not match the parameters it is replayed against")]
    StaleTape,

    #[error("codec: {0}")]
    Codec(String),

    #[error("frame: {0}")]
    Frame(String),

    #[error("payload of {bits} bits exceeds the {budget}-bit budget")]
    Bandwidth { bits: u64, budget: u64 },

    #[error("all feature channels were pruned; lower gamma")]
    AllChannelsPruned,

    #[error("{stage}: accuracy {accuracy:.4} below gate {gate:.4}")]
    GateNotReached {
        stage: String,
        accuracy: f64,
        gate: f64,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command line front end.
    ///
    /// `0` ok, `2` configuration error, `3` missing artifact, `4` numerical
    /// failure, `1` anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParam(_) | Error::Json(_) => 2,
            Error::MissingArtifact(_) => 3,
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 3,
            Error::NonFinite(_)
            | Error::Diverged(_)
            | Error::GateNotReached { .. }
            | Error::AllChannelsPruned
            | Error::Degenerate(_) => 4,
            _ => 1,
        }
    }
}
