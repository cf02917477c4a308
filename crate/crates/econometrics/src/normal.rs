//! Standard normal helpers that stay finite far into the tails.

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn pdf(z: f64) -> f64 {
    log_pdf(z).exp()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - cdf(z)` without cancellation.
pub fn sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln cdf(z)`, using the asymptotic series below z = -30 where `erfc` underflows.
pub fn log_cdf(z: f64) -> f64 {
    if z > 5.0 {
        (-sf(z)).ln_1p()
    } else if z > -30.0 {
        cdf(z).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Inverse Mills ratio `pdf(z) / cdf(z)`.
pub fn mills(z: f64) -> f64 {
    (log_pdf(z) - log_cdf(z)).exp()
}

/// Two-tailed p-value of a standard normal statistic.
pub fn two_tailed_p(z: f64) -> f64 {
    (2.0 * sf(z.abs())).min(1.0)
}
