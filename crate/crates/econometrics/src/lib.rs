//! Statistical pipeline for public-goods contribution logs.

pub mod correlation;
pub mod design;
pub mod error;
pub mod nonparametric;
pub mod normal;
pub mod optim;
pub mod reciprocity;
pub mod tobit;

pub use correlation::{coeff_diff_z, fisher_rz_diff, pearson_r, Correlation, ZTest};
pub use design::{build_design, pool_design, DesignRow};
pub use error::{Error, Result};
pub use nonparametric::{jonckheere, mwu_z, PMethod, TestResult};
pub use reciprocity::{classify_free_rider, reciprocity_metrics, ReciprocityMetrics};
pub use tobit::{tobit_fit, tobit_loglik, Bounds, TobitData, TobitFit};
