// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Param(String),
    #[error("table overflow: {0}")]
    Overflow(String),
    #[error("field error: {0}")]
    Field(String),
    #[error("input shape error: {0}")]
    InputShape(String),
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("witness generation failed: {0}")]
    Witness(String),
    #[error("setup error: {0}")]
    Setup(String),
    #[error("prover refused: {0}")]
    Refusal(String),
    #[error("key error: {0}")]
    Key(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("board transport error: {0} (is the board server running? retry once it is reachable)")]
    Transport(String),
    #[error("incomplete board: {0}")]
    IncompleteBoard(String),
    #[error("board error: {0}")]
    Board(String),
    #[error("audit scope exceeded: {0}")]
    AuditScope(String),
    #[error("insufficient precision: {0}")]
    Precision(String),
    #[error("malformed encoding: {0}")]
    Decode(String),
    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The underlying error with phase annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Phase { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
