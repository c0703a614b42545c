use thiserror::Error;

use crate::gridworld::Cell;

/// Reasons a map description is rejected by [`crate::gridworld::load_map`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map header missing or malformed: {0}")]
    MalformedHeader(String),
    #[error("map has no rows")]
    Empty,
    #[error("row {row} has width {found}, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("unknown glyph {glyph:?} at row {row}, col {col}")]
    UnknownGlyph { glyph: char, row: usize, col: usize },
    #[error("map has no start marker 'S'")]
    MissingStart,
    #[error("map has no goal marker 'G'")]
    MissingGoal,
    #[error("marker {0:?} appears more than once")]
    DuplicateMarker(char),
    #[error("goal (or key) is not reachable from the start")]
    UnreachableGoal,
    #[error("patrol cells must form one horizontally contiguous segment")]
    MalformedPatrol,
    #[error("markers inconsistent with game kind: {0}")]
    InconsistentKind(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("step() called on a terminal state")]
    SteppedTerminalState,
    #[error("cell {0} cannot reach the reference cell")]
    UnreachableState(Cell),
    #[error("network weights contain NaN or infinity")]
    NonFiniteWeights,
    #[error("loss became non-finite at update {update}")]
    NonFiniteLoss { update: usize },
    #[error("no evaluation checkpoint ever reached the goal")]
    NoSuccessfulCheckpoint,
    #[error("expert policy does not reach the goal under greedy evaluation")]
    ExpertNotCompetent,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory map {found} does not match map {expected}")]
    MapMismatch { expected: String, found: String },
    #[error("unsupported schema version {0:?}")]
    SchemaVersionMismatch(String),
    #[error("replay mismatch at {0}")]
    ReplayMismatch(#[from] crate::trajio::ReplayMismatch),
    #[error("digest mismatch for {path}: expected {expected}, found {found}")]
    DigestMismatch { path: String, expected: String, found: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
