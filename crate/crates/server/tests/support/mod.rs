//! Scripted subjects that speak the wire protocol over TCP.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use vcm_core::game::SessionConfig;
use vcm_server::{Clock, Outbound, ServeOptions, SessionState};

pub fn tokens() -> Vec<String> {
    (0..12).map(|i| format!("subject-token-{i:02}")).collect()
}

pub const OPERATOR_KEY: &str = "operator-secret";

pub fn fixed_clock() -> Clock {
    Arc::new(|| "2026-01-01T00:00:00Z".to_string())
}

pub fn options(dir: &Path) -> ServeOptions {
    ServeOptions { clock: fixed_clock(), ..ServeOptions::in_dir(dir, "live-test") }
}

pub fn fresh_state(config: SessionConfig) -> SessionState {
    SessionState::new("live-test", config, tokens(), OPERATOR_KEY).unwrap()
}

pub async fn listener() -> (TcpListener, SocketAddr) {
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    (l, addr)
}

/// Group contribution the scripted subject `s` makes in round `t`.
pub fn policy(s: usize, t: u32) -> u32 {
    match (s + t as usize) % 7 {
        0 => 0,
        1 => 100,
        _ => (s as u32 * 37 + t * 11) % 101,
    }
}

pub struct Wire {
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

impl Wire {
    pub async fn connect(addr: SocketAddr) -> Wire {
        let (r, w) = TcpStream::connect(addr).await.unwrap().into_split();
        Wire { lines: BufReader::new(r).lines(), write: w }
    }

    pub async fn send(&mut self, json: &str) {
        self.write.write_all(format!("{json}\n").as_bytes()).await.unwrap();
    }

    pub async fn recv(&mut self) -> Option<Outbound> {
        let line = self.lines.next_line().await.ok()??;
        Some(serde_json::from_str(&line).unwrap_or_else(|e| panic!("bad server line {line}: {e}")))
    }
}

/// When a scripted subject walks away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Halt {
    Never,
    /// On being asked for this round, before submitting.
    BeforeSubmitting(u32),
    /// Right after this round's submission is confirmed.
    AfterSubmitting(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed { total_tokens: f64, currency: String, feedback_rounds: Vec<u32> },
    Halted,
    Aborted(u32),
    Disconnected,
}

pub async fn subject(addr: SocketAddr, s: usize, halt: Halt) -> Outcome {
    let mut wire = Wire::connect(addr).await;
    wire.send(&format!(r#"{{"type":"join","token":"{}","protocol":1}}"#, tokens()[s])).await;
    let mut feedback_rounds = Vec::new();
    while let Some(msg) = wire.recv().await {
        match msg {
            Outbound::Welcome { subject_id, .. } => assert_eq!(subject_id, s),
            Outbound::EndowmentNotice { round, endowment } => {
                if halt == Halt::BeforeSubmitting(round) {
                    return Outcome::Halted;
                }
                let g = policy(s, round);
                wire.send(&format!(
                    r#"{{"type":"submit_allocation","private_tokens":{},"group_tokens":{g},"round":{round}}}"#,
                    endowment - g
                ))
                .await;
            }
            Outbound::SubmissionReceived { round, group_tokens } => {
                assert_eq!(group_tokens, policy(s, round));
                if halt == Halt::AfterSubmitting(round) {
                    return Outcome::Halted;
                }
            }
            Outbound::RoundFeedback { view } => {
                assert_eq!(view.own_contribution, policy(s, view.round));
                feedback_rounds.push(view.round);
                wire.send(&format!(r#"{{"type":"ack_feedback","round":{}}}"#, view.round)).await;
            }
            Outbound::SessionComplete { total_tokens, currency_amount } => {
                return Outcome::Completed { total_tokens, currency: currency_amount.to_string(), feedback_rounds };
            }
            Outbound::SessionAborted { rounds_completed } => return Outcome::Aborted(rounds_completed),
            other => panic!("subject {s} got unexpected {other:?}"),
        }
    }
    Outcome::Disconnected
}

pub async fn run_subjects(addr: SocketAddr, halt: impl Fn(usize) -> Halt) -> Vec<Outcome> {
    let handles: Vec<_> = (0..12).map(|s| tokio::spawn(subject(addr, s, halt(s)))).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

pub async fn status(addr: SocketAddr) -> vcm_server::StatusReport {
    let mut wire = Wire::connect(addr).await;
    wire.send(&format!(r#"{{"type":"operator","key":"{OPERATOR_KEY}","command":"status"}}"#)).await;
    match wire.recv().await {
        Some(Outbound::Status(s)) => s,
        other => panic!("expected status, got {other:?}"),
    }
}
