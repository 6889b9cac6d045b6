use std::path::PathBuf;

use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("network is disconnected: bus {0} is unreachable from bus {1}")]
    Disconnected(usize, usize),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate scenario window for agent {agent} event {event}: ({detect}, {end}] holds at most one day")]
    DegenerateWindow {
        agent: usize,
        event: usize,
        detect: usize,
        end: usize,
    },

    #[error("agent {agent}: horizon {event} has no admissible maintenance block")]
    AgentInfeasible { agent: usize, event: usize },

    #[error("load unsatisfiable even with zero maintenance at day {day} (unserved {unserved:.6} MW)")]
    LoadUnsatisfiable { day: usize, unserved: f64 },

    #[error("lp failure: {0}")]
    Lp(#[from] LpError),

    #[error("{file}:{row}:{col}: {msg}")]
    Parse {
        file: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
