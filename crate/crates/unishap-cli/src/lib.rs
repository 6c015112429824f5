//! Library behind the `unishap` binary: game-spec parsing, experiment
//! files, and the estimate / sweep / faithfulness runners.

pub mod experiment;
pub mod gamespec;
pub mod report;
pub mod run;

use std::fmt;

use unishap::Error;

/// Failure category, mapped one-to-one onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Bad flags, spec files, or missing inputs. Exit code 2.
    Config,
    /// The game itself failed: evaluation, protocol, subprocess, or a
    /// degenerate system derived from its values. Exit code 3.
    Game,
    /// The request exceeds a documented size or budget limit. Exit code 4.
    Capability,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Game => 3,
            Category::Capability => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Game => "game",
            Category::Capability => "capability",
        }
    }
}

/// A terminal error: category plus an operator-facing message.
#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            category: Category::Config,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.category.label(), self.message)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let category = match &err {
            Error::Capability(_) => Category::Capability,
            Error::GameEval { .. }
            | Error::Protocol { .. }
            | Error::Subprocess(_)
            | Error::Timeout(_)
            | Error::Singular(_) => Category::Game,
            _ => Category::Config,
        };
        Failure {
            category,
            message: err.to_string(),
        }
    }
}
