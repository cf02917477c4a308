//! Wire messages. Each frame is one JSON object on its own line, tagged by `type`.

use serde::{Deserialize, Serialize};
use vcm_core::game::{CurrencyAmount, FeedbackView, SubjectId, Tokens, Treatment};

pub const PROTOCOL_VERSION: u32 = 1;

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    Join {
        token: String,
        protocol: u32,
    },
    /// Amounts are read as JSON numbers of any kind so fractional or negative
    /// entries can be rejected with a precise reason.
    SubmitAllocation {
        private_tokens: f64,
        group_tokens: f64,
        /// Round the client believes is open; a stale re-delivery is rejected.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round: Option<u32>,
    },
    AckFeedback {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round: Option<u32>,
    },
    Operator {
        key: String,
        command: OperatorCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorCommand {
    Status,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    SumMismatch,
    Negative,
    NotInteger,
    OutOfPhase,
    Duplicate,
    UnknownToken,
    NotJoined,
    Malformed,
    VersionMismatch,
    Unauthorized,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::SumMismatch => "sum-mismatch",
            RejectReason::Negative => "negative",
            RejectReason::NotInteger => "not-integer",
            RejectReason::OutOfPhase => "out-of-phase",
            RejectReason::Duplicate => "duplicate",
            RejectReason::UnknownToken => "unknown-token",
            RejectReason::NotJoined => "not-joined",
            RejectReason::Malformed => "malformed",
            RejectReason::VersionMismatch => "version-mismatch",
            RejectReason::Unauthorized => "unauthorized",
        }
    }
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Welcome {
        protocol: u32,
        subject_id: SubjectId,
        session_id: String,
        treatment: Treatment,
        endowment: Tokens,
        multiplier: f64,
        group_size: usize,
        rounds: u32,
    },
    EndowmentNotice {
        round: u32,
        endowment: Tokens,
    },
    SubmissionReceived {
        round: u32,
        group_tokens: Tokens,
    },
    RejectSubmission {
        reason: RejectReason,
        detail: String,
    },
    RoundFeedback {
        view: FeedbackView,
    },
    SessionComplete {
        total_tokens: f64,
        currency_amount: CurrencyAmount,
    },
    SessionAborted {
        rounds_completed: u32,
    },
    Status(StatusReport),
}

impl Outbound {
    pub fn reject(reason: RejectReason, detail: impl Into<String>) -> Self {
        Outbound::RejectSubmission { reason, detail: detail.into() }
    }
}

/// Operator view of a session: counts only, no identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub session_id: String,
    pub phase: String,
    pub round: u32,
    pub joined: usize,
    pub submitted: usize,
    pub acknowledged: usize,
    pub rounds_completed: u32,
}

pub fn encode(msg: &Outbound) -> String {
    serde_json::to_string(msg).expect("outbound messages serialize")
}

pub fn decode(line: &str) -> Result<Inbound, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}
