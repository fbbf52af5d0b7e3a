use thiserror::Error;

use crate::topology::{AffordedAction, TopologyKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(&'static str),

    #[error("point has no semantic votes")]
    NoVotes,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("action {action:?} is not afforded by {kind:?} topology")]
    UnaffordableAction { kind: TopologyKind, action: AffordedAction },

    #[error("operation requires {expected} topology, got {got:?}")]
    WrongTopology { expected: &'static str, got: TopologyKind },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid training target: {0}")]
    InvalidTarget(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("at least two poses are required, got {0}")]
    TooFewPoses(usize),

    #[error("every object is masked")]
    AllObjectsMasked,

    #[error("scene has no objects")]
    NoObjects,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config hash mismatch: checkpoint {checkpoint}, dataset {dataset}")]
    HashMismatch { checkpoint: String, dataset: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the CLI: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }
}
