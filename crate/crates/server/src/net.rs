//! TCP transport. One task per connection forwards lines to the session loop,
//! which owns the state, applies messages in arrival order, persists, and routes
//! replies. Dropping the [`serve`] future tears everything down, which is how
//! tests simulate a crash.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinSet;
use vcm_core::game::SubjectId;
use vcm_core::log::{LogWriter, SessionLog};

use crate::protocol::{self, Outbound, RejectReason};
use crate::state::{Origin, SessionState, Target};
use crate::{snapshot, Error, Result};

/// Produces the timestamps written into the log header.
pub type Clock = Arc<dyn Fn() -> String + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

/// Address to listen on: `VCM_BIND_ADDR` if set, else localhost at `port`.
pub fn bind_addr(port: u16) -> String {
    std::env::var("VCM_BIND_ADDR").unwrap_or_else(|_| format!("127.0.0.1:{port}"))
}

#[derive(Clone)]
pub struct ServeOptions {
    /// Rewritten after every state change.
    pub snapshot: PathBuf,
    /// Grows round by round while the session runs; replaced by the full log at the end.
    pub log: PathBuf,
    pub clock: Clock,
}

impl ServeOptions {
    /// `<dir>/<session>.snapshot` and `<dir>/<session>.jsonl`.
    pub fn in_dir(dir: &Path, session_id: &str) -> Self {
        ServeOptions {
            snapshot: dir.join(format!("{session_id}.snapshot")),
            log: dir.join(format!("{session_id}.jsonl")),
            clock: system_clock(),
        }
    }
}

/// Loads the state saved by an interrupted [`serve`].
pub fn resume(opts: &ServeOptions) -> Result<SessionState> {
    snapshot::read(&opts.snapshot, Some(&opts.log))
}

type ConnId = u64;

enum Event {
    Line(ConnId, String),
    Closed(ConnId),
}

struct Conn {
    tx: mpsc::UnboundedSender<String>,
    subject: Option<SubjectId>,
}

/// Runs a session to completion (or abort) and returns its log.
pub async fn serve(listener: TcpListener, mut state: SessionState, opts: ServeOptions) -> Result<SessionLog> {
    if let Some(dir) = opts.log.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    if state.log.header.started_at.is_none() {
        state.log.header.started_at = Some((opts.clock)());
    }
    // The snapshot is authoritative; the streaming log is rebuilt from it.
    let mut writer = LogWriter::create(&opts.log, &state.log.header)?;
    writer.append(&state.log.records)?;
    snapshot::write(&opts.snapshot, &state)?;

    let (events_tx, mut events) = mpsc::unbounded_channel();
    let mut tasks = JoinSet::new();
    let mut conns: HashMap<ConnId, Conn> = HashMap::new();
    let mut by_subject: HashMap<SubjectId, ConnId> = HashMap::new();
    let mut next_id: ConnId = 0;

    while !state.phase.is_terminal() {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, _) = accepted?;
                let (tx, rx) = mpsc::unbounded_channel();
                conns.insert(next_id, Conn { tx, subject: None });
                tasks.spawn(connection(next_id, stream, events_tx.clone(), rx));
                next_id += 1;
            }
            Some(event) = events.recv() => match event {
                Event::Closed(id) => {
                    if let Some(Conn { subject: Some(s), .. }) = conns.remove(&id) {
                        if by_subject.get(&s) == Some(&id) {
                            by_subject.remove(&s);
                        }
                    }
                }
                Event::Line(id, line) => {
                    let Some(conn) = conns.get(&id) else { continue };
                    let msg = match protocol::decode(&line) {
                        Ok(m) => m,
                        Err(e) => {
                            let _ = conn.tx.send(protocol::encode(&Outbound::reject(RejectReason::Malformed, e)));
                            continue;
                        }
                    };
                    let origin = conn.subject.map_or(Origin::Anonymous, Origin::Subject);
                    let tr = state.apply(origin, &msg)?;
                    if let Some(t) = tr.completed_round {
                        writer.append(state.log.round(t))?;
                    }
                    if state.phase.is_terminal() {
                        state.log.header.finished_at = Some((opts.clock)());
                    }
                    // Persist before anyone hears about the change.
                    if tr.changed {
                        snapshot::write(&opts.snapshot, &state)?;
                    }
                    for (target, out) in tr.messages {
                        let dest = match target {
                            Target::Reply => Some(id),
                            Target::Subject(s) => by_subject.get(&s).copied(),
                        };
                        if let Outbound::Welcome { subject_id, .. } = out {
                            // A rejoin moves the subject to the newest connection.
                            if let Some(old) = by_subject.insert(subject_id, id).filter(|&o| o != id) {
                                if let Some(c) = conns.get_mut(&old) {
                                    c.subject = None;
                                }
                            }
                            if let Some(c) = conns.get_mut(&id) {
                                c.subject = Some(subject_id);
                            }
                        }
                        if let Some(c) = dest.and_then(|d| conns.get(&d)) {
                            let _ = c.tx.send(protocol::encode(&out));
                        }
                    }
                }
            }
        }
    }

    drop(writer);
    state.log.write_jsonl(&opts.log)?;
    // Closing the outbound queues lets each connection flush and hang up.
    conns.clear();
    let _ = tokio::time::timeout(Duration::from_secs(5), async {
        while tasks.join_next().await.is_some() {}
    })
    .await;
    Ok(state.log)
}

async fn connection(
    id: ConnId,
    stream: TcpStream,
    events: mpsc::UnboundedSender<Event>,
    mut outbound: mpsc::UnboundedReceiver<String>,
) {
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let mut reading = true;
    loop {
        tokio::select! {
            line = lines.next_line(), if reading => match line {
                Ok(Some(l)) if l.trim().is_empty() => {}
                Ok(Some(l)) => {
                    if events.send(Event::Line(id, l)).is_err() {
                        break;
                    }
                }
                _ => {
                    reading = false;
                    let _ = events.send(Event::Closed(id));
                }
            },
            out = outbound.recv() => match out {
                Some(mut l) => {
                    l.push('\n');
                    if write.write_all(l.as_bytes()).await.is_err() {
                        let _ = events.send(Event::Closed(id));
                        break;
                    }
                }
                None => break,
            },
        }
    }
    let _ = write.shutdown().await;
}
