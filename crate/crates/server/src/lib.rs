//! Live sessions: a deterministic state machine behind a line-delimited JSON
//! transport, snapshotted after every change so a crashed server can resume.

pub mod net;
pub mod protocol;
pub mod snapshot;
pub mod state;

use std::path::PathBuf;

pub use net::{bind_addr, resume, serve, system_clock, Clock, ServeOptions};
pub use protocol::{Inbound, OperatorCommand, Outbound, RejectReason, StatusReport, PROTOCOL_VERSION};
pub use state::{handle_message, Origin, Phase, SessionState, Target, Transition};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] vcm_core::Error),

    #[error("session setup: {0}")]
    Setup(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: corrupt snapshot ({detail}); {}", path.display(), last_round_note(*last_valid_round))]
    CorruptSnapshot { path: PathBuf, detail: String, last_valid_round: Option<u32> },

    #[error("network: {0}")]
    Net(#[from] std::io::Error),
}

fn last_round_note(round: Option<u32>) -> String {
    match round {
        Some(t) => format!("the session log holds {t} complete rounds"),
        None => "no session log to report the last complete round".into(),
    }
}
