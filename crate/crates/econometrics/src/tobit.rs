//! Two-limit (double-censored) Tobit regression by maximum likelihood, with
//! standard errors clustered by a caller-supplied unit.
//!
//! Estimation runs damped Newton in Olsen's `(beta / sigma, 1 / sigma)`, where the
//! log-likelihood is concave, starting from least squares on the uncensored rows. At the optimum the information matrix ("bread") is the
//! central-difference Hessian of the analytic gradient in `(beta, sigma)`, and
//! the "meat" sums per-cluster analytic scores. The sandwich is scaled by
//! `G/(G-1) * (N-1)/(N-k)` with `G` clusters, `N` rows and `k` slope
//! coefficients including the intercept.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::correlation::pearson_r;
use crate::error::{Error, Result};
use crate::normal::{log_cdf, log_pdf, mills, two_tailed_p};
use crate::optim::{newton, numerical_hessian, Options};

/// Censoring limits. Observations at or beyond a limit count as censored there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::Domain(format!("lower bound {lower} must be below upper bound {upper}")));
        }
        Ok(Bounds { lower, upper })
    }

    /// `[0, e]` for an endowment of `e` tokens.
    pub fn tokens(endowment: u32) -> Self {
        Bounds { lower: 0.0, upper: f64::from(endowment) }
    }
}

/// Design matrix (row-major), response and cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TobitData {
    pub names: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub clusters: Vec<usize>,
}

impl TobitData {
    pub fn new(names: Vec<String>, x: Vec<f64>, y: Vec<f64>, clusters: Vec<usize>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::Structure("no regressors".into()));
        }
        if x.len() != y.len() * k || clusters.len() != y.len() {
            return Err(Error::Structure(format!(
                "inconsistent shapes: {} cells for {} rows of {k} regressors, {} cluster labels",
                x.len(),
                y.len(),
                clusters.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in design".into()));
        }
        Ok(TobitData { names, x, y, clusters })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.x[i * k..(i + 1) * k]
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.k(), &self.x)
    }

    fn intercept_only(&self) -> TobitData {
        TobitData {
            names: vec!["intercept".into()],
            x: vec![1.0; self.n()],
            y: self.y.clone(),
            clusters: self.clusters.clone(),
        }
    }

    fn is_intercept_only(&self) -> bool {
        self.k() == 1 && self.x.iter().all(|&v| v == 1.0)
    }
}

/// Log-likelihood of one observation and its derivatives with respect to the
/// linear index and sigma.
fn row_terms(mu: f64, y: f64, sigma: f64, b: &Bounds) -> (f64, f64, f64) {
    if y <= b.lower {
        let a = (b.lower - mu) / sigma;
        let lambda = mills(a);
        (log_cdf(a), -lambda / sigma, -lambda * a / sigma)
    } else if y >= b.upper {
        let c = (b.upper - mu) / sigma;
        let lambda = mills(-c);
        (log_cdf(-c), lambda / sigma, lambda * c / sigma)
    } else {
        let r = (y - mu) / sigma;
        (log_pdf(r) - sigma.ln(), r / sigma, (r * r - 1.0) / sigma)
    }
}

fn index(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLik {
    pub value: f64,
    /// Derivatives with respect to each beta, then sigma.
    pub gradient: Vec<f64>,
}

/// Censored-normal log-likelihood and its analytic gradient.
pub fn tobit_loglik(beta: &[f64], sigma: f64, data: &TobitData, bounds: &Bounds) -> Result<LogLik> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if beta.len() != data.k() {
        return Err(Error::Structure(format!("{} coefficients for {} regressors", beta.len(), data.k())));
    }
    Ok(loglik_unchecked(beta, sigma, data, bounds))
}

fn loglik_unchecked(beta: &[f64], sigma: f64, data: &TobitData, bounds: &Bounds) -> LogLik {
    // Compensated sums keep the value smooth enough for the line search near the optimum.
    let k = data.k();
    let mut value = Neumaier::default();
    let mut gradient = vec![Neumaier::default(); k + 1];
    for (i, &y) in data.y.iter().enumerate() {
        let row = data.row(i);
        let (l, d_mu, d_sigma) = row_terms(index(row, beta), y, sigma, bounds);
        value.add(l);
        for (g, &xj) in gradient.iter_mut().zip(row) {
            g.add(d_mu * xj);
        }
        gradient[k].add(d_sigma);
    }
    LogLik { value: value.total(), gradient: gradient.iter().map(Neumaier::total).collect() }
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Per-observation scores in `(beta, sigma)`, summed within clusters.
fn cluster_scores(beta: &[f64], sigma: f64, data: &TobitData, bounds: &Bounds) -> Vec<DVector<f64>> {
    let k = data.k();
    let mut sums: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    for (i, &y) in data.y.iter().enumerate() {
        let row = data.row(i);
        let (_, d_mu, d_sigma) = row_terms(index(row, beta), y, sigma, bounds);
        let s = sums.entry(data.clusters[i]).or_insert_with(|| DVector::zeros(k + 1));
        for j in 0..k {
            s[j] += d_mu * row[j];
        }
        s[k] += d_sigma;
    }
    sums.into_values().collect()
}

/// Least squares on the given rows; `None` when singular.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.cholesky().map(|c| c.solve(&xty))
}

fn check_rank(data: &TobitData) -> Result<()> {
    let x = data.matrix();
    let xtx = x.transpose() * &x;
    // Scale columns to unit diagonal so the condition check is unit-free.
    let d: Vec<f64> = (0..data.k()).map(|j| xtx[(j, j)].sqrt()).collect();
    if let Some(j) = d.iter().position(|&v| v == 0.0) {
        return Err(Error::Structure(format!("regressor `{}` is identically zero", data.names[j])));
    }
    let scaled = DMatrix::from_fn(data.k(), data.k(), |i, j| xtx[(i, j)] / (d[i] * d[j]));
    let sv = scaled.singular_values();
    let (max, min) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    if min <= 1e-12 * max {
        return Err(Error::Structure("design matrix is rank deficient".into()));
    }
    Ok(())
}

struct Estimate {
    beta: Vec<f64>,
    sigma: f64,
    llf: f64,
    iterations: usize,
    gradient_norm: f64,
}

fn start_point(data: &TobitData, bounds: &Bounds) -> (Vec<f64>, f64) {
    let interior: Vec<usize> =
        (0..data.n()).filter(|&i| data.y[i] > bounds.lower && data.y[i] < bounds.upper).collect();
    let try_rows = |rows: &[usize]| -> Option<(Vec<f64>, f64)> {
        if rows.len() <= data.k() {
            return None;
        }
        let x = DMatrix::from_fn(rows.len(), data.k(), |r, c| data.row(rows[r])[c]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y[i]));
        let beta = least_squares(&x, &y)?;
        let resid = &y - &x * &beta;
        let sigma = (resid.norm_squared() / rows.len() as f64).sqrt();
        Some((beta.iter().copied().collect(), sigma))
    };
    let all: Vec<usize> = (0..data.n()).collect();
    let (beta, sigma) = try_rows(&interior)
        .or_else(|| try_rows(&all))
        .unwrap_or_else(|| (vec![0.0; data.k()], 1.0));
    let spread = (bounds.upper - bounds.lower).abs();
    let floor = if spread.is_finite() { 1e-3 * spread } else { 1e-3 };
    (beta, if sigma > floor { sigma } else { floor.max(1e-8) })
}

/// Maximizes in Olsen's parameters `(beta / sigma, 1 / sigma)`, where the
/// two-limit log-likelihood is globally concave, so Newton steps are safe from any
/// start.
fn maximize(data: &TobitData, bounds: &Bounds, opts: &Options) -> Result<Estimate> {
    let k = data.k();
    let (beta0, sigma0) = start_point(data, bounds);
    let mut start: DVector<f64> = DVector::from_iterator(k, beta0.iter().map(|b| b / sigma0));
    start = start.push(1.0 / sigma0);

    let objective = |t: &DVector<f64>| -> (f64, DVector<f64>) {
        let theta = t[k];
        if !(theta > 0.0 && theta.is_finite()) {
            return (f64::INFINITY, DVector::zeros(k + 1));
        }
        let sigma = 1.0 / theta;
        let beta: Vec<f64> = t.as_slice()[..k].iter().map(|g| g * sigma).collect();
        let ll = loglik_unchecked(&beta, sigma, data, bounds);
        let gb = &ll.gradient[..k];
        let mut g = DVector::zeros(k + 1);
        for j in 0..k {
            g[j] = -gb[j] * sigma;
        }
        let gb_dot_beta: f64 = gb.iter().zip(&beta).map(|(a, b)| a * b).sum();
        g[k] = sigma * gb_dot_beta + sigma * sigma * ll.gradient[k];
        (-ll.value, g)
    };
    let hessian = |t: &DVector<f64>| numerical_hessian(|u| objective(u).1, t);
    let min = newton(objective, hessian, start, opts)?;

    let sigma = 1.0 / min.x[k];
    let beta: Vec<f64> = min.x.as_slice()[..k].iter().map(|g| g * sigma).collect();
    // Report the gradient in (beta, ln sigma), the scale users read estimates on.
    let ll = loglik_unchecked(&beta, sigma, data, bounds);
    let gradient_norm = ll
        .gradient
        .iter()
        .enumerate()
        .map(|(j, v)| if j == k { (v * sigma).abs() } else { v.abs() })
        .fold(0.0, f64::max);
    Ok(Estimate { beta, sigma, llf: -min.value, iterations: min.iterations, gradient_norm })
}

#[derive(Debug, Clone)]
pub struct TobitFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Cluster-robust standard errors of the coefficients.
    pub std_errors: Vec<f64>,
    pub sigma: f64,
    pub sigma_se: f64,
    /// Cluster-robust covariance of `(beta, sigma)`.
    pub covariance: DMatrix<f64>,
    pub llf: f64,
    /// Log-likelihood of the intercept-only model on the same rows.
    pub llf_null: f64,
    /// McFadden's `1 - llf / llf_null`.
    pub pseudo_r2: f64,
    /// Correlation of observed y with the linear index clamped to the bounds; `None` when
    /// the prediction is constant.
    pub corr_observed_predicted: Option<f64>,
    pub censored_lower: f64,
    pub censored_upper: f64,
    pub n: usize,
    pub clusters: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub bounds: Bounds,
}

impl TobitFit {
    pub fn z(&self, j: usize) -> f64 {
        self.coefficients[j] / self.std_errors[j]
    }

    pub fn p(&self, j: usize) -> f64 {
        two_tailed_p(self.z(j))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Linear index clamped to the censoring bounds.
    pub fn predict(&self, row: &[f64]) -> f64 {
        index(row, &self.coefficients).clamp(self.bounds.lower, self.bounds.upper)
    }
}

/// Fits the two-limit Tobit model with standard errors clustered on `data.clusters`.
pub fn tobit_fit(data: &TobitData, bounds: &Bounds) -> Result<TobitFit> {
    tobit_fit_with(data, bounds, &Options::default())
}

pub fn tobit_fit_with(data: &TobitData, bounds: &Bounds, opts: &Options) -> Result<TobitFit> {
    let bounds = Bounds::new(bounds.lower, bounds.upper)?;
    let (n, k) = (data.n(), data.k());
    let groups = data.clusters.iter().collect::<std::collections::BTreeSet<_>>().len();
    if groups < 2 {
        return Err(Error::Structure(format!("need at least 2 clusters, got {groups}")));
    }
    if n <= k {
        return Err(Error::Structure(format!("{n} rows cannot identify {k} coefficients")));
    }
    check_rank(data)?;

    let est = maximize(data, &bounds, opts)?;

    // Bread: negative Hessian of the log-likelihood in (beta, sigma).
    let mut at = DVector::from_vec(est.beta.clone());
    at = at.push(est.sigma);
    let hessian = numerical_hessian(
        |t| DVector::from_vec(loglik_unchecked(&t.as_slice()[..k], t[k], data, &bounds).gradient),
        &at,
    );
    let info = -hessian;
    let bread = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Structure("information matrix is not positive definite".into()))?;

    let mut meat = DMatrix::zeros(k + 1, k + 1);
    for s in cluster_scores(&est.beta, est.sigma, data, &bounds) {
        meat += &s * s.transpose();
    }
    let g = groups as f64;
    let correction = g / (g - 1.0) * (n as f64 - 1.0) / (n - k) as f64;
    let covariance = &bread * meat * &bread * correction;
    let se: Vec<f64> = (0..=k).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();

    let llf_null = if data.is_intercept_only() {
        est.llf
    } else {
        maximize(&data.intercept_only(), &bounds, opts)?.llf
    };

    let fit_rows = |i: usize| index(data.row(i), &est.beta).clamp(bounds.lower, bounds.upper);
    let predicted: Vec<f64> = (0..n).map(fit_rows).collect();
    let corr = pearson_r(&data.y, &predicted).ok().map(|c| c.r);

    Ok(TobitFit {
        names: data.names.clone(),
        coefficients: est.beta,
        std_errors: se[..k].to_vec(),
        sigma: est.sigma,
        sigma_se: se[k],
        covariance,
        llf: est.llf,
        llf_null,
        pseudo_r2: 1.0 - est.llf / llf_null,
        corr_observed_predicted: corr,
        censored_lower: data.y.iter().filter(|&&y| y <= bounds.lower).count() as f64 / n as f64,
        censored_upper: data.y.iter().filter(|&&y| y >= bounds.upper).count() as f64 / n as f64,
        n,
        clusters: groups,
        iterations: est.iterations,
        gradient_norm: est.gradient_norm,
        bounds,
    })
}
