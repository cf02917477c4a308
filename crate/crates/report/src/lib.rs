//! Presentation artifacts for analyzed logs: per-round mean series, the
//! reciprocity table, Tobit fits per cell, and between-cell coefficient
//! comparisons, rendered as aligned text and CSV.

pub mod analysis;
pub mod render;

use std::path::{Path, PathBuf};

pub use analysis::{build_report, per_round_means, AnalysisReport, CellAnalysis, Comparison, ComparisonRow};
pub use render::{render_report, stars};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Structure(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] vcm_core::Error),
    #[error(transparent)]
    Econometrics(#[from] vcm_econometrics::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
