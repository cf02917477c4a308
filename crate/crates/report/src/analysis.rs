use std::ops::RangeInclusive;

use vcm_core::game::{SessionConfig, Treatment};
use vcm_core::log::SessionLog;
use vcm_econometrics::design::filter_rounds;
use vcm_econometrics::{
    coeff_diff_z, pool_design, reciprocity_metrics, tobit_fit, Bounds, ReciprocityMetrics, TobitData, TobitFit,
    ZTest,
};

use crate::{Error, Result};

/// Mean contribution per round over every subject of every log.
pub fn per_round_means(logs: &[SessionLog]) -> Result<Vec<f64>> {
    let Some(first) = logs.first() else {
        return Ok(Vec::new());
    };
    let reference = comparable(first.config());
    if let Some(other) = logs.iter().find(|l| comparable(l.config()) != reference) {
        return Err(Error::Structure(format!(
            "{} and {} were run with different session settings",
            first.header.session_id, other.header.session_id
        )));
    }
    let rounds = logs.iter().map(|l| l.rounds_recorded()).max().unwrap_or(0) as usize;
    let mut sums = vec![0u64; rounds];
    let mut counts = vec![0u64; rounds];
    for r in logs.iter().flat_map(|l| &l.records) {
        sums[r.round as usize - 1] += u64::from(r.contribution);
        counts[r.round as usize - 1] += 1;
    }
    Ok(sums.iter().zip(&counts).map(|(&s, &c)| s as f64 / c as f64).collect())
}

/// Settings that must agree for logs to share a cell; the seed may differ.
fn comparable(config: &SessionConfig) -> SessionConfig {
    SessionConfig { seed: 0, ..config.clone() }
}

#[derive(Debug, Clone)]
pub struct CellAnalysis {
    pub label: String,
    pub treatment: Treatment,
    pub sessions: Vec<String>,
    pub seeds: Vec<u64>,
    pub started_at: Vec<String>,
    pub subjects: usize,
    pub means: Vec<f64>,
    pub reciprocity: ReciprocityMetrics,
    /// `Err` holds the reason the regression could not be estimated.
    pub fit: std::result::Result<TobitFit, String>,
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    /// First cell's coefficient minus the second's.
    pub difference: f64,
    pub test: ZTest,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub first: String,
    pub second: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub cells: Vec<CellAnalysis>,
    pub comparisons: Vec<Comparison>,
    pub rounds: Option<RangeInclusive<u32>>,
    pub generated_at: Option<String>,
}

fn analyze_cell(label: &str, logs: &[SessionLog], rounds: Option<&RangeInclusive<u32>>) -> Result<CellAnalysis> {
    let first = logs
        .first()
        .ok_or_else(|| Error::Structure(format!("cell `{label}` has no logs")))?;
    let means = per_round_means(logs)?;
    let reciprocity = reciprocity_metrics(logs, rounds.cloned())?;
    let mut rows = pool_design(logs)?;
    if let Some(r) = rounds {
        rows = filter_rounds(rows, r);
    }
    let fit = TobitData::from_rows(&rows)
        .and_then(|data| tobit_fit(&data, &Bounds::tokens(first.config().endowment)))
        .map_err(|e| e.to_string());
    Ok(CellAnalysis {
        label: label.to_string(),
        treatment: first.config().treatment,
        sessions: logs.iter().map(|l| l.header.session_id.clone()).collect(),
        seeds: logs.iter().map(|l| l.header.seed).collect(),
        started_at: logs.iter().filter_map(|l| l.header.started_at.clone()).collect(),
        subjects: logs.iter().map(|l| l.session_size()).sum(),
        means,
        reciprocity,
        fit,
    })
}

/// Coefficient differences for every regressor both fits share.
pub fn compare_fits(first: &TobitFit, second: &TobitFit) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (j, name) in first.names.iter().enumerate() {
        if let Some(k) = second.index_of(name) {
            let (b1, b2) = (first.coefficients[j], second.coefficients[k]);
            rows.push(ComparisonRow {
                name: name.clone(),
                difference: b1 - b2,
                test: coeff_diff_z(b1, first.std_errors[j], b2, second.std_errors[k])?,
            });
        }
    }
    Ok(rows)
}

/// Analyzes each labelled cell and compares the requested pairs. Without explicit
/// pairs, every pair of cells with the same feedback treatment is compared in the
/// order given.
pub fn build_report(
    cells: &[(String, Vec<SessionLog>)],
    pairs: Option<&[(String, String)]>,
    rounds: Option<RangeInclusive<u32>>,
) -> Result<AnalysisReport> {
    let analyses = cells
        .iter()
        .map(|(label, logs)| analyze_cell(label, logs, rounds.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let find = |label: &str| {
        analyses
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| Error::Structure(format!("unknown cell `{label}` in comparison")))
    };
    let pairs: Vec<(String, String)> = match pairs {
        Some(p) => p.to_vec(),
        None => {
            let mut auto = Vec::new();
            for (i, a) in analyses.iter().enumerate() {
                for b in &analyses[i + 1..] {
                    if a.treatment == b.treatment {
                        auto.push((a.label.clone(), b.label.clone()));
                    }
                }
            }
            auto
        }
    };

    let mut comparisons = Vec::new();
    for (a, b) in pairs {
        let (ca, cb) = (find(&a)?, find(&b)?);
        let rows = match (&ca.fit, &cb.fit) {
            (Ok(fa), Ok(fb)) => compare_fits(fa, fb)?,
            _ => Vec::new(),
        };
        comparisons.push(Comparison { first: a, second: b, rows });
    }
    Ok(AnalysisReport { cells: analyses, comparisons, rounds, generated_at: None })
}
