//! Drives complete sessions with simulated rosters.
//!
//! Within a replication, regrouping draws from its own stream and every
//! agent from another, keyed by `(seed, replication, role)`. Replications are
//! therefore reproducible one at a time and can run in any order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agents::{agent_decide, AgentSpec, HistoryView};
use crate::error::{Error, Result};
use crate::game::{assign_groups, build_feedback, compute_round_payoffs, FeedbackView, SessionConfig, Tokens};
use crate::log::{write_records_csv, LogHeader, Roster, SessionLog};
use crate::rng::{agent_stream, stream_rng, GROUPING_STREAM};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub config: SessionConfig,
    pub roster: Vec<AgentSpec>,
    pub replications: u32,
    pub seed: u64,
    pub output: PathBuf,
    /// Prefix of generated session ids.
    pub session_prefix: String,
    pub cell: Option<String>,
}

impl RunSpec {
    pub fn new(config: SessionConfig, roster: Vec<AgentSpec>) -> Self {
        RunSpec {
            seed: config.seed,
            config,
            roster,
            replications: 1,
            output: PathBuf::from("out"),
            session_prefix: "sim".into(),
            cell: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.roster.len() != self.config.session_size() {
            return Err(Error::Config(format!(
                "roster has {} agents for a session of {}",
                self.roster.len(),
                self.config.session_size()
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        for (i, a) in self.roster.iter().enumerate() {
            a.validate(self.config.endowment, self.config.treatment)
                .map_err(|e| Error::Config(format!("agent {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn session_id(&self, replication: u32) -> String {
        format!("{}-{replication:04}", self.session_prefix)
    }
}

/// Runs one replication of `spec`.
pub fn run_session(spec: &RunSpec, replication: u32) -> Result<SessionLog> {
    spec.validate()?;
    let rep = u64::from(replication);
    let mut config = spec.config.clone();
    config.seed = spec.seed;
    let n = config.session_size();
    let e = config.endowment;

    let mut header = LogHeader::new(spec.session_id(replication), config.clone(), Roster::Agents(spec.roster.clone()));
    header.cell = spec.cell.clone();
    header.replication = rep;
    let mut log = SessionLog::new(header);
    log.records.reserve(n * config.rounds as usize);

    let mut grouping_rng = stream_rng(spec.seed, rep, GROUPING_STREAM);
    let mut agent_rngs: Vec<_> = (0..n).map(|i| stream_rng(spec.seed, rep, agent_stream(i))).collect();
    let ids: Vec<usize> = (0..n).collect();

    let mut first: Vec<Tokens> = Vec::new();
    let mut last: Vec<FeedbackView> = Vec::new();
    let mut before_last: Vec<FeedbackView> = Vec::new();

    for t in 1..=config.rounds {
        let assignment = assign_groups(&config, &ids, t, &mut grouping_rng)?;
        let contributions = spec
            .roster
            .iter()
            .zip(agent_rngs.iter_mut())
            .enumerate()
            .map(|(i, (agent, rng))| {
                let view = if t == 1 {
                    HistoryView::empty()
                } else {
                    HistoryView::from_feedback(first[i], &last[i], before_last.get(i), e)
                };
                agent_decide(agent, &view, t, e, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let earnings = compute_round_payoffs(&config, &assignment, &contributions)?;
        let views = (0..n)
            .map(|i| build_feedback(&config, &assignment, &contributions, &earnings, i))
            .collect::<Result<Vec<_>>>()?;
        log.push_round(&assignment, &contributions, &earnings)?;
        if t == 1 {
            first = contributions;
        }
        before_last = std::mem::replace(&mut last, views);
    }
    Ok(log)
}

/// Per-round means across all subjects of all replications.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub per_round_means: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub logs: Vec<SessionLog>,
    pub summary: BatchSummary,
}

pub fn summarize(logs: &[SessionLog]) -> BatchSummary {
    let rounds = logs.iter().map(|l| l.rounds_recorded()).max().unwrap_or(0) as usize;
    let mut sums = vec![0u64; rounds];
    let mut counts = vec![0u64; rounds];
    for r in logs.iter().flat_map(|l| &l.records) {
        let t = r.round as usize - 1;
        sums[t] += u64::from(r.contribution);
        counts[t] += 1;
    }
    BatchSummary {
        per_round_means: sums.iter().zip(&counts).map(|(&s, &c)| s as f64 / c as f64).collect(),
    }
}

/// Runs all replications (in parallel) and summarizes them.
pub fn run_batch(spec: &RunSpec) -> Result<Batch> {
    spec.validate()?;
    let logs = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_session(spec, r))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&logs);
    Ok(Batch { logs, summary })
}

/// Writes each log as `<session_id>.jsonl`, all records as `records.csv`, and the
/// per-round means as `summary.csv`.
pub fn write_batch(batch: &Batch, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(batch.logs.len() + 2);
    for log in &batch.logs {
        let path = dir.join(format!("{}.jsonl", log.header.session_id));
        log.write_jsonl(&path)?;
        written.push(path);
    }
    let csv_path = dir.join("records.csv");
    write_records_csv(&batch.logs, &csv_path)?;
    written.push(csv_path);

    let summary_path = dir.join("summary.csv");
    let mut text = String::from("round,mean_contribution\n");
    for (t, m) in batch.summary.per_round_means.iter().enumerate() {
        text.push_str(&format!("{},{}\n", t + 1, m));
    }
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    written.push(summary_path);
    Ok(written)
}
