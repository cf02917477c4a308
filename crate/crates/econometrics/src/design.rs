//! Regression rows built from session logs.

use std::ops::RangeInclusive;

use vcm_core::game::Treatment;
use vcm_core::log::SessionLog;

use crate::error::{Error, Result};
use crate::tobit::TobitData;

/// Regressor names in column order; the last two only under session feedback.
pub const REGRESSORS: [&str; 8] =
    ["intercept", "first", "lag1", "lag2", "over", "under", "zero_count", "full_count"];

/// One (subject, round) observation, round >= 3.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    /// Clustering unit: unique per subject across pooled logs.
    pub cluster: usize,
    pub subject_id: usize,
    pub round: u32,
    pub y: f64,
    pub first: f64,
    pub lag1: f64,
    pub lag2: f64,
    /// `max(lag1 - mean of the other group members at t-1, 0)`.
    pub over: f64,
    /// `max(mean of the other group members at t-1 - lag1, 0)`.
    pub under: f64,
    /// Zero contributors among the other session members at t-1.
    pub zero_count: Option<f64>,
    /// Full contributors among the other session members at t-1.
    pub full_count: Option<f64>,
}

impl DesignRow {
    pub fn features(&self) -> Vec<f64> {
        let mut f = vec![1.0, self.first, self.lag1, self.lag2, self.over, self.under];
        if let (Some(z), Some(u)) = (self.zero_count, self.full_count) {
            f.push(z);
            f.push(u);
        }
        f
    }
}

/// Rows for one log, ordered by subject then round.
pub fn build_design(log: &SessionLog) -> Result<Vec<DesignRow>> {
    log.validate().map_err(|e| Error::Structure(format!("{}: {e}", log.header.session_id)))?;
    let config = log.config();
    let n = config.session_size();
    let e = config.endowment;
    let with_counts = config.treatment == Treatment::SessionFeedback;
    let x = log.contribution_table();
    let groups = log.group_table();
    let rounds = x.len();

    let mut rows = Vec::with_capacity(n * rounds.saturating_sub(2));
    for s in 0..n {
        for t in 3..=rounds {
            let prev = &x[t - 2];
            let gid = groups[t - 2][s];
            let (sum, members) = prev
                .iter()
                .zip(&groups[t - 2])
                .enumerate()
                .filter(|&(j, (_, &g))| j != s && g == gid)
                .fold((0u64, 0usize), |(acc, m), (_, (&c, _))| (acc + u64::from(c), m + 1));
            let mean = sum as f64 / members as f64;
            let lag1 = f64::from(prev[s]);
            let (zero_count, full_count) = if with_counts {
                let others = prev.iter().enumerate().filter(|&(j, _)| j != s).map(|(_, &c)| c);
                let (z, f) = others.fold((0u32, 0u32), |(z, f), c| (z + u32::from(c == 0), f + u32::from(c == e)));
                (Some(f64::from(z)), Some(f64::from(f)))
            } else {
                (None, None)
            };
            rows.push(DesignRow {
                cluster: s,
                subject_id: s,
                round: t as u32,
                y: f64::from(x[t - 1][s]),
                first: f64::from(x[0][s]),
                lag1,
                lag2: f64::from(x[t - 3][s]),
                over: (lag1 - mean).max(0.0),
                under: (mean - lag1).max(0.0),
                zero_count,
                full_count,
            });
        }
    }
    Ok(rows)
}

/// Pools several logs of one treatment; cluster ids stay unique per (log, subject).
pub fn pool_design(logs: &[SessionLog]) -> Result<Vec<DesignRow>> {
    let Some(first) = logs.first() else {
        return Ok(Vec::new());
    };
    let treatment = first.config().treatment;
    let mut rows = Vec::new();
    let mut offset = 0;
    for log in logs {
        if log.config().treatment != treatment {
            return Err(Error::Structure(format!(
                "cannot pool {} with {} feedback logs",
                log.config().treatment,
                treatment
            )));
        }
        rows.extend(build_design(log)?.into_iter().map(|mut r| {
            r.cluster += offset;
            r
        }));
        offset += log.session_size();
    }
    Ok(rows)
}

/// Keeps rows whose dependent round lies in `rounds`.
pub fn filter_rounds(rows: Vec<DesignRow>, rounds: &RangeInclusive<u32>) -> Vec<DesignRow> {
    rows.into_iter().filter(|r| rounds.contains(&r.round)).collect()
}

impl TobitData {
    /// Design matrix with the regressors present in `rows`.
    pub fn from_rows(rows: &[DesignRow]) -> Result<Self> {
        let k = rows.first().map_or(6, |r| r.features().len());
        let mut x = Vec::with_capacity(rows.len() * k);
        for r in rows {
            let f = r.features();
            if f.len() != k {
                return Err(Error::Structure("rows mix feedback treatments".into()));
            }
            x.extend(f);
        }
        TobitData::new(
            REGRESSORS[..k].iter().map(|s| s.to_string()).collect(),
            x,
            rows.iter().map(|r| r.y).collect(),
            rows.iter().map(|r| r.cluster).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vcm_core::game::{compute_round_payoffs, GroupAssignment, SessionConfig};
    use vcm_core::log::{LogHeader, Roster};

    /// Four rounds, fixed groups {0..3},{4..7},{8..11}; contributions chosen by hand.
    fn toy(treatment: Treatment) -> SessionLog {
        let config = SessionConfig { rounds: 4, ..SessionConfig::with_treatment(treatment) };
        let mut log = SessionLog::new(LogHeader::new("toy", config.clone(), Roster::live()));
        let table: [[u32; 12]; 4] = [
            [40, 10, 20, 30, 0, 0, 100, 100, 50, 50, 50, 50],
            [70, 10, 20, 30, 0, 100, 100, 0, 20, 20, 20, 20],
            [20, 20, 20, 20, 0, 0, 0, 0, 100, 100, 100, 100],
            [55, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5],
        ];
        for (t, x) in table.iter().enumerate() {
            let a = GroupAssignment::new(t as u32 + 1, vec![(0..4).collect(), (4..8).collect(), (8..12).collect()]);
            let e = compute_round_payoffs(&config, &a, x).unwrap();
            log.push_round(&a, x, &e).unwrap();
        }
        log
    }

    #[test]
    fn over_and_under_by_definition() {
        let rows = build_design(&toy(Treatment::GroupFeedback)).unwrap();
        assert_eq!(rows.len(), 12 * 2);
        // subject 0, round 3: own t-1 = 70, others {10, 20, 30}
        let r = rows.iter().find(|r| r.subject_id == 0 && r.round == 3).unwrap();
        assert_eq!((r.lag1, r.over, r.under), (70.0, 50.0, 0.0));
        assert_eq!((r.first, r.lag2, r.y), (40.0, 40.0, 20.0));
        assert!(r.zero_count.is_none());
        // subject 8, round 3: own t-1 = 20 equals the others' mean
        let r = rows.iter().find(|r| r.subject_id == 8 && r.round == 3).unwrap();
        assert_eq!((r.over, r.under), (0.0, 0.0));
        // subject 1, round 4: own 20, others {20, 20, 20}
        let r = rows.iter().find(|r| r.subject_id == 1 && r.round == 4).unwrap();
        assert_eq!((r.lag1, r.over, r.under, r.y), (20.0, 0.0, 0.0, 5.0));
        assert!(rows.iter().all(|r| r.over * r.under == 0.0));
    }

    #[test]
    fn session_counts_exclude_self() {
        let rows = build_design(&toy(Treatment::SessionFeedback)).unwrap();
        // round 3 looks at round 2: zeros at subjects 4 and 7, full at 5 and 6
        let r = rows.iter().find(|r| r.subject_id == 4 && r.round == 3).unwrap();
        assert_eq!((r.zero_count, r.full_count), (Some(1.0), Some(2.0)));
        let r = rows.iter().find(|r| r.subject_id == 0 && r.round == 3).unwrap();
        assert_eq!((r.zero_count, r.full_count), (Some(2.0), Some(2.0)));
        // round 4 looks at round 3: four zeros and four full contributors
        let r = rows.iter().find(|r| r.subject_id == 9 && r.round == 4).unwrap();
        assert_eq!((r.zero_count, r.full_count), (Some(4.0), Some(3.0)));
        assert_eq!(r.features().len(), 8);
    }

    #[test]
    fn pooling_and_mixing() {
        let a = toy(Treatment::GroupFeedback);
        let rows = pool_design(&[a.clone(), a.clone(), a]).unwrap();
        assert_eq!(rows.len(), 72);
        let clusters: std::collections::BTreeSet<_> = rows.iter().map(|r| r.cluster).collect();
        assert_eq!(clusters.len(), 36);
        assert!(pool_design(&[toy(Treatment::GroupFeedback), toy(Treatment::SessionFeedback)]).is_err());
        let data = TobitData::from_rows(&rows).unwrap();
        assert_eq!(data.names.len(), 6);
        assert_eq!(filter_rounds(rows, &(4..=4)).len(), 36);
    }

    #[test]
    fn malformed_log_is_rejected() {
        let mut log = toy(Treatment::GroupFeedback);
        log.records[3].earnings = 1.0;
        assert!(matches!(build_design(&log), Err(Error::Structure(_))));
    }
}
