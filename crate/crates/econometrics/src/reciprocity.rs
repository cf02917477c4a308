//! Reciprocity summaries of a cell of logs: how own contributions track what the
//! other group members did in the previous round.

use std::ops::RangeInclusive;

use vcm_core::game::Tokens;
use vcm_core::log::SessionLog;

use crate::correlation::pearson_r;
use crate::error::{Error, Result};

/// True when `contribution` is below a third of the endowment (33 or less at 100).
pub fn classify_free_rider(contribution: Tokens, endowment: Tokens) -> Result<bool> {
    if contribution > endowment {
        return Err(Error::Domain(format!("contribution {contribution} exceeds endowment {endowment}")));
    }
    Ok(3 * u64::from(contribution) < u64::from(endowment))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocityMetrics {
    /// Mean over subjects of corr(own contribution at t, mean of the other group
    /// members at t-1). `None` when no subject has a defined correlation.
    pub mean_individual_r: Option<f64>,
    pub subjects_used: usize,
    /// Subjects whose own or lagged-others series is constant over the window.
    pub subjects_excluded: usize,
    /// corr(own contribution at t, free riders among the other group members at t-1)
    /// over all (subject, round) pairs.
    pub free_rider_r: Option<f64>,
    /// Why `free_rider_r` is missing.
    pub free_rider_undefined: Option<String>,
    pub observations: usize,
}

/// Reciprocity metrics over `logs`, using dependent rounds in `rounds` (clamped to
/// `2..=T`; all of them when `None`).
pub fn reciprocity_metrics(logs: &[SessionLog], rounds: Option<RangeInclusive<u32>>) -> Result<ReciprocityMetrics> {
    let mut individual = Vec::new();
    let mut excluded = 0;
    let mut pooled_own = Vec::new();
    let mut pooled_free = Vec::new();

    for log in logs {
        log.validate().map_err(|e| Error::Structure(format!("{}: {e}", log.header.session_id)))?;
        let e = log.config().endowment;
        let x = log.contribution_table();
        let groups = log.group_table();
        let last = x.len() as u32;
        let (lo, hi) = rounds.as_ref().map_or((2, last), |r| (*r.start(), *r.end()));
        let window = lo.max(2)..=hi.min(last);

        for s in 0..log.session_size() {
            let mut own = Vec::new();
            let mut others_mean = Vec::new();
            for t in window.clone() {
                let prev = (t - 2) as usize;
                let gid = groups[prev][s];
                let mates: Vec<Tokens> = (0..x[prev].len())
                    .filter(|&j| j != s && groups[prev][j] == gid)
                    .map(|j| x[prev][j])
                    .collect();
                let y = f64::from(x[t as usize - 1][s]);
                own.push(y);
                others_mean.push(mates.iter().map(|&c| f64::from(c)).sum::<f64>() / mates.len() as f64);
                let free = mates.iter().map(|&c| classify_free_rider(c, e)).collect::<Result<Vec<_>>>()?;
                pooled_own.push(y);
                pooled_free.push(free.into_iter().filter(|&f| f).count() as f64);
            }
            match pearson_r(&own, &others_mean) {
                Ok(c) => individual.push(c.r),
                Err(Error::UndefinedCorrelation(_)) => excluded += 1,
                Err(Error::Domain(_)) => excluded += 1,
                Err(other) => return Err(other),
            }
        }
    }

    let (free_rider_r, free_rider_undefined) = match pearson_r(&pooled_own, &pooled_free) {
        Ok(c) => (Some(c.r), None),
        Err(e @ (Error::UndefinedCorrelation(_) | Error::Domain(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(ReciprocityMetrics {
        mean_individual_r: (!individual.is_empty()).then(|| individual.iter().sum::<f64>() / individual.len() as f64),
        subjects_used: individual.len(),
        subjects_excluded: excluded,
        free_rider_r,
        free_rider_undefined,
        observations: pooled_own.len(),
    })
}
