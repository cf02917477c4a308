//! Brute-force permutation oracle for cross-pair rank statistics.
//!
//! Every distinct assignment of group labels to the pooled values is visited, so
//! the null distribution is exact (and conditional on the observed ties).

/// Cross-pair count over ordered groups: 1 for `x < y`, 1/2 for ties.
pub fn cross_pairs(groups: &[Vec<f64>]) -> f64 {
    let mut j = 0.0;
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            for &x in &groups[a] {
                for &y in &groups[b] {
                    if x < y {
                        j += 1.0;
                    } else if x == y {
                        j += 0.5;
                    }
                }
            }
        }
    }
    j
}

/// Calls `f` with each distinct label sequence having `sizes[g]` copies of label `g`.
pub fn for_each_labeling(sizes: &[usize], f: &mut impl FnMut(&[usize])) {
    fn go(left: &mut [usize], seq: &mut Vec<usize>, len: usize, f: &mut impl FnMut(&[usize])) {
        if seq.len() == len {
            f(seq);
            return;
        }
        for g in 0..left.len() {
            if left[g] > 0 {
                left[g] -= 1;
                seq.push(g);
                go(left, seq, len, f);
                seq.pop();
                left[g] += 1;
            }
        }
    }
    let len = sizes.iter().sum();
    go(&mut sizes.to_vec(), &mut Vec::with_capacity(len), len, f);
}

pub fn split(values: &[f64], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut groups = vec![Vec::new(); k];
    for (&v, &l) in values.iter().zip(labels) {
        groups[l].push(v);
    }
    groups
}

/// Exact null distribution of the cross-pair count as sorted `(value, count)` pairs.
pub struct Oracle {
    dist: Vec<(f64, u64)>,
    total: u64,
    mean: f64,
}

impl Oracle {
    pub fn new(values: &[f64], sizes: &[usize]) -> Self {
        let mut all = Vec::new();
        for_each_labeling(sizes, &mut |labels| all.push(cross_pairs(&split(values, labels, sizes.len()))));
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut dist: Vec<(f64, u64)> = Vec::new();
        for j in all {
            match dist.last_mut() {
                Some((v, c)) if *v == j => *c += 1,
                _ => dist.push((j, 1)),
            }
        }
        let total = dist.iter().map(|d| d.1).sum();
        let mut mean = 0.0;
        for (i, a) in sizes.iter().enumerate() {
            for b in &sizes[i + 1..] {
                mean += (a * b) as f64 / 2.0;
            }
        }
        Oracle { dist, total, mean }
    }

    /// `(P(J >= observed), P(|J - mean| >= |observed - mean|))`.
    pub fn p(&self, observed: f64) -> (f64, f64) {
        let dev = (observed - self.mean).abs();
        let (mut up, mut two) = (0, 0);
        for &(v, c) in &self.dist {
            if v >= observed - 1e-9 {
                up += c;
            }
            if (v - self.mean).abs() >= dev - 1e-9 {
                two += c;
            }
        }
        (up as f64 / self.total as f64, two as f64 / self.total as f64)
    }
}

/// Compositions of at most `max_total` into `k` positive parts.
pub fn splits(k: usize, max_total: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let reserve = k - cur.len() - 1;
        for s in 1..=left.saturating_sub(reserve) {
            cur.push(s);
            go(k, left - s, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(k, max_total, &mut Vec::new(), &mut out);
    out
}

/// Pooled values of length `n`: strictly increasing, or with heavy ties.
pub fn value_sets(n: usize) -> [Vec<f64>; 2] {
    let distinct = (0..n).map(|i| i as f64 * 3.0 + 1.0).collect();
    let tied = (0..n).map(|i| [0.0, 0.0, 5.0, 5.0, 5.0, 9.0, 12.0, 12.0, 20.0, 20.0][i % 10]).collect();
    [distinct, tied]
}
