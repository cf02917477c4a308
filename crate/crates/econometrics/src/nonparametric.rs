//! Mann-Whitney and Jonckheere rank tests.
//!
//! Both statistics count ordered cross-pairs, with ties counted one half. The
//! z score always comes from the normal approximation: tie-corrected variance
//! for Mann-Whitney, the plain no-ties variance for Jonckheere. P-values come
//! from the exact permutation distribution (conditional on the observed ties)
//! when the pooled sample is small, and from the normal approximation
//! otherwise.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::normal::{sf, two_tailed_p};

/// How p-values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PMethod {
    /// Exact for pooled samples of at most [`EXACT_LIMIT`] when the permutation
    /// distribution is cheap to tabulate, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

/// Largest pooled sample for which `Auto` tabulates the exact distribution.
pub const EXACT_LIMIT: usize = 20;
const EXACT_STATE_BUDGET: f64 = 2e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PSource {
    Exact,
    NormalApproximation,
}

impl PSource {
    pub fn label(self) -> &'static str {
        match self {
            PSource::Exact => "exact permutation",
            PSource::NormalApproximation => "normal approximation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test: &'static str,
    /// U of the second sample over the first, or Jonckheere's J.
    pub statistic: f64,
    pub mean: f64,
    pub variance: f64,
    pub z: f64,
    /// P(statistic >= observed): second sample larger, or increasing trend.
    pub p_one_tailed: f64,
    pub p_two_tailed: f64,
    pub sizes: Vec<usize>,
    pub p_source: PSource,
}

fn check_groups(groups: &[&[f64]], min_groups: usize) -> Result<()> {
    if groups.len() < min_groups {
        return Err(Error::Domain(format!("need at least {min_groups} groups, got {}", groups.len())));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::Domain(format!("sample {} is empty", i + 1)));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in sample".into()));
    }
    Ok(())
}

/// Twice the ordered cross-pair count: pairs `(i < j)` of groups, `x` from `i`
/// and `y` from `j`, score 2 when `x < y` and 1 when tied.
fn doubled_count(groups: &[&[f64]]) -> u64 {
    let mut total = 0;
    for (i, gi) in groups.iter().enumerate() {
        for gj in &groups[i + 1..] {
            for &x in *gi {
                for &y in *gj {
                    total += match x.partial_cmp(&y).expect("NaN rejected") {
                        std::cmp::Ordering::Less => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Greater => 0,
                    };
                }
            }
        }
    }
    total
}

/// Twice the null mean of the cross-pair count: `sum_{i<j} n_i n_j`.
fn doubled_mean(sizes: &[usize]) -> u64 {
    let mut m = 0;
    for (i, &a) in sizes.iter().enumerate() {
        for &b in &sizes[i + 1..] {
            m += (a * b) as u64;
        }
    }
    m
}

/// Multiplicities of the distinct pooled values in ascending order.
fn tie_levels(groups: &[&[f64]]) -> Vec<usize> {
    let mut all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("NaN rejected"));
    let mut levels = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let j = all[i..].iter().position(|&v| v != all[i]).map_or(all.len(), |p| i + p);
        levels.push(j - i);
        i = j;
    }
    levels
}

fn exact_is_cheap(sizes: &[usize]) -> bool {
    let n: usize = sizes.iter().sum();
    let states: f64 = sizes.iter().map(|&s| (s + 1) as f64).product::<f64>() * (2 * doubled_mean(sizes) + 1) as f64;
    n <= EXACT_LIMIT && states <= EXACT_STATE_BUDGET
}

/// Calls `f` with every vector `c` where `sum(c) == total` and `c[j] <= cap[j]`.
fn compositions(total: usize, cap: &[usize], f: &mut impl FnMut(&[usize])) {
    fn go(j: usize, left: usize, cap: &[usize], cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if j + 1 == cap.len() {
            if left <= cap[j] {
                cur.push(left);
                f(cur);
                cur.pop();
            }
            return;
        }
        let rest: usize = cap[j + 1..].iter().sum();
        for c in left.saturating_sub(rest)..=left.min(cap[j]) {
            cur.push(c);
            go(j + 1, left - c, cap, cur, f);
            cur.pop();
        }
    }
    go(0, total, cap, &mut Vec::with_capacity(cap.len()), f);
}

/// Permutation distribution of the doubled cross-pair count given the group
/// sizes and the tie structure, as `(doubled count, probability)` pairs.
///
/// Values are visited level by level in ascending order; the state is how many
/// members of each group have been placed. A level of `c` tied values split as
/// `(c_1..c_k)` across groups adds `2 * sum_{i<j} c_j placed_i + sum_{i<j} c_i c_j`
/// and occurs in `c! / prod c_j!` label arrangements.
fn exact_distribution(sizes: &[usize], levels: &[usize]) -> Vec<(u64, f64)> {
    let n: usize = sizes.iter().sum();
    let ln_fact: Vec<f64> = (0..=n).scan(0.0, |acc, i| {
        if i > 0 {
            *acc += (i as f64).ln();
        }
        Some(*acc)
    }).collect();

    let mut states: HashMap<Vec<usize>, HashMap<u64, f64>> = HashMap::new();
    states.insert(vec![0; sizes.len()], HashMap::from([(0, 1.0)]));
    for &c in levels {
        let mut next: HashMap<Vec<usize>, HashMap<u64, f64>> = HashMap::new();
        for (placed, dist) in &states {
            let cap: Vec<usize> = sizes.iter().zip(placed).map(|(s, p)| s - p).collect();
            compositions(c, &cap, &mut |comp| {
                let mut inc = 0u64;
                let mut before = 0usize;
                let mut tied_before = 0usize;
                for (j, &cj) in comp.iter().enumerate() {
                    inc += (2 * cj * before + cj * tied_before) as u64;
                    before += placed[j];
                    tied_before += cj;
                }
                let weight = (ln_fact[c] - comp.iter().map(|&x| ln_fact[x]).sum::<f64>()).exp();
                let key: Vec<usize> = placed.iter().zip(comp).map(|(p, x)| p + x).collect();
                let slot = next.entry(key).or_default();
                for (&d, &w) in dist {
                    *slot.entry(d + inc).or_insert(0.0) += w * weight;
                }
            });
        }
        states = next;
    }
    let dist = states.remove(sizes).unwrap_or_default();
    let total: f64 = dist.values().sum();
    let mut out: Vec<(u64, f64)> = dist.into_iter().map(|(d, w)| (d, w / total)).collect();
    out.sort_unstable_by_key(|&(d, _)| d);
    out
}

fn exact_p(sizes: &[usize], levels: &[usize], observed: u64) -> (f64, f64) {
    let mean = doubled_mean(sizes) as i64;
    let dev = (observed as i64 - mean).abs();
    let (mut upper, mut two) = (0.0, 0.0);
    for (d, p) in exact_distribution(sizes, levels) {
        if d >= observed {
            upper += p;
        }
        if (d as i64 - mean).abs() >= dev {
            two += p;
        }
    }
    if dev == 0 {
        two = 1.0;
    }
    (upper.min(1.0), two.min(1.0))
}

fn finish(
    test: &'static str,
    groups: &[&[f64]],
    variance: f64,
    method: PMethod,
) -> TestResult {
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let observed = doubled_count(groups);
    let statistic = observed as f64 / 2.0;
    let mean = doubled_mean(&sizes) as f64 / 2.0;
    let z = if variance > 0.0 { (statistic - mean) / variance.sqrt() } else { 0.0 };
    let exact = match method {
        PMethod::Exact => true,
        PMethod::Normal => false,
        PMethod::Auto => exact_is_cheap(&sizes),
    };
    let (p_one_tailed, p_two_tailed, p_source) = if exact {
        let (u, t) = exact_p(&sizes, &tie_levels(groups), observed);
        (u, t, PSource::Exact)
    } else {
        (sf(z), two_tailed_p(z), PSource::NormalApproximation)
    };
    TestResult { test, statistic, mean, variance, z, p_one_tailed, p_two_tailed, sizes, p_source }
}

/// Mann-Whitney test of `b` against `a`; positive z means `b` tends to be larger.
pub fn mwu_z(a: &[f64], b: &[f64]) -> Result<TestResult> {
    mwu_with(a, b, PMethod::Auto)
}

pub fn mwu_with(a: &[f64], b: &[f64], method: PMethod) -> Result<TestResult> {
    let groups = [a, b];
    check_groups(&groups, 2)?;
    let (m, n) = (a.len() as f64, b.len() as f64);
    let total = m + n;
    let ties: f64 = tie_levels(&groups).iter().map(|&t| (t * t * t - t) as f64).sum();
    let variance = if total > 1.0 {
        m * n / 12.0 * ((total + 1.0) - ties / (total * (total - 1.0)))
    } else {
        0.0
    };
    Ok(finish("mann-whitney", &groups, variance.max(0.0), method))
}

/// Jonckheere trend test over samples in their hypothesized increasing order.
pub fn jonckheere(groups: &[&[f64]]) -> Result<TestResult> {
    jonckheere_with(groups, PMethod::Auto)
}

pub fn jonckheere_with(groups: &[&[f64]], method: PMethod) -> Result<TestResult> {
    check_groups(groups, 2)?;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let cube: f64 = groups.iter().map(|g| {
        let s = g.len() as f64;
        s * s * (2.0 * s + 3.0)
    }).sum();
    let variance = (n * n * (2.0 * n + 3.0) - cube) / 72.0;
    Ok(finish("jonckheere", groups, variance, method))
}
