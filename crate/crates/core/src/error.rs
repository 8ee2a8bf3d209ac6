use crate::graph::NodeId;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("no edge from `{from}` to `{to}`")]
    MissingEdge { from: NodeId, to: NodeId },
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid route `{id}`: {reason}")]
    InvalidRoute { id: String, reason: String },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("infeasible coverage target for level {level}: reached {achieved:.4} of target {target:.4} with no budget left")]
    InfeasibleTarget { level: u8, achieved: f64, target: f64 },
    #[error("target `{0}` is unreachable from the start node")]
    UnreachableTarget(NodeId),
    #[error("records do not align with episodes: {0}")]
    Misaligned(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap a serde/IO error with the offending file path.
    pub fn parse(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
