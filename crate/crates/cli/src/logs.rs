//! Loading logs by glob and sorting them into cells.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vcm_core::config::RunConfig;
use vcm_core::log::{read_logs, SessionLog};

pub fn load(pattern: &str, config: Option<&Path>) -> Result<Vec<SessionLog>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob `{pattern}`"))?
        .collect::<std::result::Result<_, _>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    if paths.is_empty() {
        bail!("no log files match `{pattern}`");
    }
    let csv_config = config.map(RunConfig::load).transpose()?.map(|c| c.session);
    Ok(read_logs(&paths, csv_config.as_ref())?)
}

/// A log's cell: its recorded label, else its feedback treatment.
pub fn cell_of(log: &SessionLog) -> String {
    log.header.cell.clone().unwrap_or_else(|| log.config().treatment.label().to_string())
}

/// Every cell present, in order of first appearance.
pub fn cell_labels(logs: &[SessionLog]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for l in logs {
        let c = cell_of(l);
        if !labels.contains(&c) {
            labels.push(c);
        }
    }
    labels
}

/// Logs of one cell. When no log carries a label at all, the whole set is the cell.
pub fn select_cell(logs: &[SessionLog], cell: &str) -> Result<Vec<SessionLog>> {
    let selected: Vec<SessionLog> = logs.iter().filter(|l| cell_of(l) == cell).cloned().collect();
    if !selected.is_empty() {
        return Ok(selected);
    }
    if logs.iter().all(|l| l.header.cell.is_none()) && cell_labels(logs).len() == 1 {
        return Ok(logs.to_vec());
    }
    bail!("no logs for cell `{cell}`; found {}", cell_labels(logs).join(", "))
}
