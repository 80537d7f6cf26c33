use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("infeasible assignment: team {team} violates {constraint}")]
    Infeasible { team: usize, constraint: Constraint },

    #[error("robot {robot} is already a member of team {team}")]
    AlreadyMember { robot: usize, team: usize },

    #[error("robot {robot} is not a member of team {team}")]
    NotMember { robot: usize, team: usize },

    #[error("invalid transfer of robot {robot}: {reason}")]
    InvalidTransfer { robot: usize, reason: String },

    #[error("need N >= M >= 1, got N={robots}, M={teams}")]
    TooFewRobots { robots: usize, teams: usize },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (samples {first_sample}..)")]
    NonFiniteLoss {
        loss: f64,
        epoch: usize,
        batch: usize,
        first_sample: usize,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Hard constraint named in [`Error::Infeasible`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Nonempty,
    Capability(usize),
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Constraint::Nonempty => write!(f, "the nonempty-team constraint"),
            Constraint::Capability(c) => {
                write!(f, "the at-least-one-robot-with-capability-{c} constraint")
            }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
