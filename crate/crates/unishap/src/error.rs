//! Crate-wide error type.

/// Errors surfaced by games, samplers, estimators, and oracles.
///
/// The variants map onto distinct failure categories so callers (notably the
/// CLI) can translate them into stable exit codes: configuration problems,
/// game-evaluation problems, and capability limits.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The request is well-formed but exceeds a documented capability limit
    /// (for example an exact oracle above its dimension cap).
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// A game failed to produce a finite value; carries the offending subset
    /// rendered as a bitmask string.
    #[error("game evaluation failed on subset {subset}: {message}")]
    GameEval { subset: String, message: String },

    /// An external game broke the wire protocol; `line` counts protocol lines
    /// received from the subprocess since startup.
    #[error("wire protocol violation at line {line}: {message}")]
    Protocol { line: usize, message: String },

    /// The external game subprocess exited or closed its pipes.
    #[error("external game subprocess terminated: {0}")]
    Subprocess(String),

    /// The external game did not answer within the configured deadline.
    #[error("external game timed out after {0:?}")]
    Timeout(std::time::Duration),

    /// A linear solve failed beyond the pseudo-inverse tolerance.
    #[error("singular system: {0}")]
    Singular(String),

    /// Malformed input data (tables, sketches, spec files).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
