//! Small statistics toolbox used by the Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeMap;

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate { mean: f64::NAN, stderr: f64::NAN, count: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MeanEstimate { mean, stderr: (var / n as f64).sqrt(), count: n }
    }

    /// `|mean - target| <= k * stderr` (exact agreement passes when stderr is 0).
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12
    }

    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if (self.mean - target).abs() <= 1e-12 { 0.0 } else { f64::INFINITY }
        } else {
            (self.mean - target) / self.stderr
        }
    }
}

/// Kolmogorov limiting survival function `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS statistic of `xs` against a continuous CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).expect("no NaN"));
    y.sort_by(|p, q| p.partial_cmp(q).expect("no NaN"));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// Result of a chi-square test.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi_p(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}

/// Goodness of fit of observed counts against cell probabilities.
///
/// Cells with expected count below `min_expected` are pooled (in order) with
/// their neighbours before the statistic is formed.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquare {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * total as f64;
        if e_acc >= min_expected {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let Some(last) = cells.last_mut() {
            last.0 += o_acc;
            last.1 += e_acc;
        } else {
            cells.push((o_acc, e_acc));
        }
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len().saturating_sub(1);
    ChiSquare { statistic: stat, dof, p_value: chi_p(stat, dof) }
}

/// Two-sample chi-square homogeneity test on categorical outcomes.
///
/// Categories whose pooled count is below `min_count` are merged into a
/// single remainder category.
pub fn chi_square_two_sample<K: Ord + Clone>(a: &[K], b: &[K], min_count: u64) -> ChiSquare {
    let mut table: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for k in a {
        table.entry(k.clone()).or_default().0 += 1;
    }
    for k in b {
        table.entry(k.clone()).or_default().1 += 1;
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut rest = (0.0, 0.0);
    for (_, (x, y)) in table {
        if x + y >= min_count {
            cells.push((x as f64, y as f64));
        } else {
            rest.0 += x as f64;
            rest.1 += y as f64;
        }
    }
    if rest.0 + rest.1 > 0.0 {
        cells.push(rest);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    for &(x, y) in &cells {
        let col = x + y;
        let ea = col * na / n;
        let eb = col * nb / n;
        if ea > 0.0 {
            stat += (x - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            stat += (y - eb).powi(2) / eb;
        }
    }
    let dof = cells.len().saturating_sub(1);
    ChiSquare { statistic: stat, dof, p_value: chi_p(stat, dof) }
}

/// Empirical distribution of categorical outcomes.
pub fn empirical<K: Ord + Clone>(xs: &[K]) -> BTreeMap<K, f64> {
    let mut m: BTreeMap<K, f64> = BTreeMap::new();
    for x in xs {
        *m.entry(x.clone()).or_default() += 1.0;
    }
    let n = xs.len() as f64;
    for v in m.values_mut() {
        *v /= n;
    }
    m
}

/// Total variation distance between two discrete laws.
pub fn total_variation<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Kolmogorov distance between the empirical CDFs of two integer samples.
pub fn ks_discrete(a: &[i64], b: &[i64]) -> f64 {
    let pa = empirical(a);
    let pb = empirical(b);
    let mut keys: Vec<i64> = pa.keys().chain(pb.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    let (mut fa, mut fb, mut d) = (0.0f64, 0.0f64, 0.0f64);
    for k in keys {
        fa += pa.get(&k).copied().unwrap_or(0.0);
        fb += pb.get(&k).copied().unwrap_or(0.0);
        d = d.max((fa - fb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ks_of_uniform_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&xs, |x| x) <= 0.0005 + 1e-12);
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 1e-3);
    }

    #[test]
    fn chi_square_of_exact_counts() {
        let r = chi_square_gof(&[250, 250, 500], &[0.25, 0.25, 0.5], 5.0);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let s = chi_square_two_sample(&[1, 1, 2, 2], &[1, 2, 1, 2], 1);
        assert_eq!(s.statistic, 0.0);
    }

    #[test]
    fn tv_and_discrete_ks() {
        let p = empirical(&[1, 1, 2, 3]);
        let q = empirical(&[1, 2, 2, 3]);
        assert!((total_variation(&p, &q) - 0.25).abs() < 1e-15);
        assert!((ks_discrete(&[1, 1, 2, 3], &[1, 2, 2, 3]) - 0.25).abs() < 1e-15);
    }
}
