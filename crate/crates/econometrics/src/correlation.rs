//! Pearson correlation and the two z statistics used to compare estimates.

use crate::error::{Error, Result};
use crate::normal::two_tailed_p;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
}

/// A normal test statistic with its two-tailed p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTest {
    pub z: f64,
    pub p_two_tailed: f64,
}

impl ZTest {
    fn new(z: f64) -> Self {
        ZTest { z, p_two_tailed: two_tailed_p(z) }
    }
}

/// Sample Pearson correlation. Constant series yield [`Error::UndefinedCorrelation`].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Domain(format!("need at least 3 pairs, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in series".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        let which = if constant(x) { "first" } else { "second" };
        return Err(Error::UndefinedCorrelation(format!("{which} series is constant")));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(Correlation { r, n })
}

/// Difference of two independent correlations on the Fisher z scale.
pub fn fisher_rz_diff(r1: f64, n1: usize, r2: f64, n2: usize) -> Result<ZTest> {
    for (r, n) in [(r1, n1), (r2, n2)] {
        if r.is_nan() || r.abs() >= 1.0 {
            return Err(Error::Domain(format!("|r| must be below 1, got {r}")));
        }
        if n < 4 {
            return Err(Error::Domain(format!("need n >= 4, got {n}")));
        }
    }
    let se = (1.0 / (n1 - 3) as f64 + 1.0 / (n2 - 3) as f64).sqrt();
    Ok(ZTest::new((r1.atanh() - r2.atanh()) / se))
}

/// Difference of two independent coefficients over the root sum of squared SEs.
pub fn coeff_diff_z(b1: f64, se1: f64, b2: f64, se2: f64) -> Result<ZTest> {
    if !(se1 > 0.0 && se2 > 0.0) {
        return Err(Error::Domain(format!("standard errors must be positive, got {se1} and {se2}")));
    }
    Ok(ZTest::new((b1 - b2) / se1.hypot(se2)))
}
