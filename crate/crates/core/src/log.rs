//! The persisted session log.
//!
//! On disk a log is line-delimited JSON: one header object, then one object
//! per (round, subject) in `(round, subject_id)` order. The same records can be
//! exported as CSV with columns
//! `session_id,round,subject_id,group_id,contribution,earnings`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::error::{Error, Result};
use crate::game::{compute_round_payoffs, GroupAssignment, SessionConfig, SubjectId, Tokens};

pub const LOG_FORMAT: &str = "vcm-session-log";
pub const LOG_VERSION: u32 = 1;
pub const CSV_COLUMNS: [&str; 6] =
    ["session_id", "round", "subject_id", "group_id", "contribution", "earnings"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub session_id: String,
    pub round: u32,
    pub subject_id: SubjectId,
    pub group_id: usize,
    pub contribution: Tokens,
    pub earnings: f64,
}

/// Who produced the decisions: a simulated roster or live participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Roster {
    Agents(Vec<AgentSpec>),
    Label(String),
}

impl Roster {
    pub fn live() -> Self {
        Roster::Label("live".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    /// Analysis cell this session belongs to, e.g. `us-session`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
    pub config: SessionConfig,
    pub roster: Roster,
    pub seed: u64,
    pub rng: String,
    #[serde(default)]
    pub replication: u64,
    /// False when a live session was aborted before its last round.
    #[serde(default = "yes")]
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

fn yes() -> bool {
    true
}

impl LogHeader {
    pub fn new(session_id: impl Into<String>, config: SessionConfig, roster: Roster) -> Self {
        LogHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            session_id: session_id.into(),
            cell: None,
            seed: config.seed,
            config,
            roster,
            rng: crate::rng::RNG_NAME.into(),
            replication: 0,
            complete: true,
            started_at: None,
            finished_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub header: LogHeader,
    pub records: Vec<ContributionRecord>,
}

impl SessionLog {
    pub fn new(header: LogHeader) -> Self {
        SessionLog { header, records: Vec::new() }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.header.config
    }

    pub fn session_size(&self) -> usize {
        self.header.config.session_size()
    }

    /// Number of rounds with records.
    pub fn rounds_recorded(&self) -> u32 {
        (self.records.len() / self.session_size().max(1)) as u32
    }

    /// Appends one completed round. `contributions` and `earnings` are indexed by subject.
    pub fn push_round(
        &mut self,
        assignment: &GroupAssignment,
        contributions: &[Tokens],
        earnings: &[f64],
    ) -> Result<()> {
        let ids = assignment.group_ids(self.session_size())?;
        for (s, gid) in ids.into_iter().enumerate() {
            self.records.push(ContributionRecord {
                session_id: self.header.session_id.clone(),
                round: assignment.round,
                subject_id: s,
                group_id: gid,
                contribution: contributions[s],
                earnings: earnings[s],
            });
        }
        Ok(())
    }

    /// Records of round `t` (1-based), indexed by subject. Assumes a validated log.
    pub fn round(&self, t: u32) -> &[ContributionRecord] {
        let n = self.session_size();
        let start = (t as usize - 1) * n;
        &self.records[start..start + n]
    }

    /// Contributions as a `rounds x subjects` table.
    pub fn contribution_table(&self) -> Vec<Vec<Tokens>> {
        self.records
            .chunks(self.session_size())
            .map(|r| r.iter().map(|c| c.contribution).collect())
            .collect()
    }

    /// Group ids as a `rounds x subjects` table.
    pub fn group_table(&self) -> Vec<Vec<usize>> {
        self.records
            .chunks(self.session_size())
            .map(|r| r.iter().map(|c| c.group_id).collect())
            .collect()
    }

    /// Per-subject token totals over all recorded rounds.
    pub fn subject_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.session_size()];
        for r in &self.records {
            totals[r.subject_id] += r.earnings;
        }
        totals
    }

    /// Equality of everything but wall-clock timestamps.
    pub fn same_content(&self, other: &SessionLog) -> bool {
        let strip = |h: &LogHeader| LogHeader { started_at: None, finished_at: None, ..h.clone() };
        strip(&self.header) == strip(&other.header) && self.records == other.records
    }

    /// Full structural check: record count and order, partitions, and payoffs recomputed
    /// from contributions must agree exactly with the stored earnings.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.format != LOG_FORMAT || h.version != LOG_VERSION {
            return Err(Error::Structure(format!("unsupported log format {} v{}", h.format, h.version)));
        }
        h.config.validate()?;
        let n = self.session_size();
        let t_max = h.config.rounds as usize;
        if !self.records.len().is_multiple_of(n) {
            return Err(Error::Structure(format!(
                "{} records is not a whole number of rounds of {n}",
                self.records.len()
            )));
        }
        let rounds = self.records.len() / n;
        if h.complete && rounds != t_max {
            return Err(Error::Structure(format!("complete log holds {rounds} of {t_max} rounds")));
        }
        if rounds > t_max {
            return Err(Error::Structure(format!("log holds {rounds} rounds, config allows {t_max}")));
        }
        for (ti, chunk) in self.records.chunks(n).enumerate() {
            let t = ti as u32 + 1;
            let mut groups = vec![Vec::new(); h.config.group_count];
            for (s, r) in chunk.iter().enumerate() {
                if r.round != t || r.subject_id != s {
                    return Err(Error::Structure(format!(
                        "expected round {t} subject {s}, found round {} subject {}",
                        r.round, r.subject_id
                    )));
                }
                if r.session_id != h.session_id {
                    return Err(Error::Structure(format!(
                        "record for session `{}` inside log `{}`",
                        r.session_id, h.session_id
                    )));
                }
                groups
                    .get_mut(r.group_id)
                    .ok_or_else(|| Error::Structure(format!("round {t}: group id {} out of range", r.group_id)))?
                    .push(s);
            }
            let assignment = GroupAssignment { round: t, groups };
            let x: Vec<Tokens> = chunk.iter().map(|r| r.contribution).collect();
            let earnings = compute_round_payoffs(&h.config, &assignment, &x)
                .map_err(|e| Error::Structure(format!("round {t}: {e}")))?;
            for (r, e) in chunk.iter().zip(earnings) {
                if r.earnings != e {
                    return Err(Error::Structure(format!(
                        "round {t} subject {}: stored earnings {} but payoff rule gives {e}",
                        r.subject_id, r.earnings
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or("empty log")?;
        let header: LogHeader = serde_json::from_str(first).map_err(|e| format!("line 1: {e}"))?;
        let records = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<std::result::Result<_, _>>()?;
        Ok(SessionLog { header, records })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text).map_err(|m| Error::parse(path, m))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_records_csv(std::slice::from_ref(self), path)
    }
}

/// Writes the records of several logs to one CSV file.
pub fn write_records_csv(logs: &[SessionLog], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::parse(path, e);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in logs.iter().flat_map(|l| &l.records) {
        w.write_record([
            r.session_id.clone(),
            r.round.to_string(),
            r.subject_id.to_string(),
            r.group_id.to_string(),
            r.contribution.to_string(),
            r.earnings.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV export. CSV carries no configuration, so the caller supplies it; one log
/// is returned per distinct `session_id`, in order of first appearance.
pub fn read_records_csv(path: &Path, config: &SessionConfig) -> Result<Vec<SessionLog>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::parse(path, format!("expected columns {}", CSV_COLUMNS.join(","))));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_session: BTreeMap<String, Vec<ContributionRecord>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::parse(path, e))?;
        let field = |k: usize| -> Result<&str> {
            row.get(k).ok_or_else(|| Error::parse(path, format!("row {}: missing column {k}", i + 2)))
        };
        let num_err = |e: &dyn std::fmt::Display| Error::parse(path, format!("row {}: {e}", i + 2));
        let rec = ContributionRecord {
            session_id: field(0)?.to_string(),
            round: field(1)?.parse().map_err(|e| num_err(&e))?,
            subject_id: field(2)?.parse().map_err(|e| num_err(&e))?,
            group_id: field(3)?.parse().map_err(|e| num_err(&e))?,
            contribution: field(4)?.parse().map_err(|e| num_err(&e))?,
            earnings: field(5)?.parse().map_err(|e| num_err(&e))?,
        };
        if !by_session.contains_key(&rec.session_id) {
            order.push(rec.session_id.clone());
        }
        by_session.entry(rec.session_id.clone()).or_default().push(rec);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let mut records = by_session.remove(&id).unwrap_or_default();
            records.sort_by_key(|r| (r.round, r.subject_id));
            let mut header = LogHeader::new(id, config.clone(), Roster::Label("csv".into()));
            header.complete = records.len() == config.rounds as usize * config.session_size();
            SessionLog { header, records }
        })
        .collect())
}

/// Reads every log matched by a list of paths; `.csv` files need `csv_config`.
pub fn read_logs(paths: &[impl AsRef<Path>], csv_config: Option<&SessionConfig>) -> Result<Vec<SessionLog>> {
    let mut logs = Vec::new();
    for p in paths {
        let p = p.as_ref();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let config = csv_config.ok_or_else(|| {
                Error::Config(format!("{}: CSV input needs a session configuration", p.display()))
            })?;
            logs.extend(read_records_csv(p, config)?);
        } else {
            logs.push(SessionLog::read_jsonl(p)?);
        }
    }
    Ok(logs)
}

/// Streams a log to disk round by round; used by the live server so a crash leaves a
/// readable prefix.
pub struct LogWriter {
    out: BufWriter<fs::File>,
    path: std::path::PathBuf,
}

impl LogWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = LogWriter { out: BufWriter::new(file), path: path.to_path_buf() };
        w.line(&serde_json::to_string(header).expect("header serializes"))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, records: &[ContributionRecord]) -> Result<()> {
        for r in records {
            self.line(&serde_json::to_string(r).expect("record serializes"))?;
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Counts the complete rounds in a (possibly truncated) log file.
pub fn complete_rounds_on_disk(path: &Path) -> Result<u32> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header: LogHeader = match lines.next() {
        Some(Ok(l)) => serde_json::from_str(&l).map_err(|e| Error::parse(path, e))?,
        _ => return Ok(0),
    };
    let good = lines
        .map_while(|l| l.ok())
        .take_while(|l| serde_json::from_str::<ContributionRecord>(l).is_ok())
        .count();
    Ok((good / header.config.session_size()) as u32)
}
