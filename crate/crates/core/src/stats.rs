//! Two-sample and goodness-of-fit tests used by the experiments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution tail `P(K > x)`.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.27 {
        return 1.0;
    }
    if x < 1.0 {
        // small-x series converges faster here
        let s: f64 = (1..=50)
            .map(|k| {
                let k = (2 * k - 1) as f64;
                (-(k * k) * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (effective size `n m / (n + m)`, with the usual finite-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (x.len(), y.len());
    if n == 0 || m == 0 {
        return TestResult { statistic: f64::NAN, p_value: f64::NAN };
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    let p = kolmogorov_tail((en + 0.12 + 0.11 / en) * d);
    TestResult { statistic: d, p_value: p }
}

/// Pearson chi-square test for two samples of counts over the same categories.
/// Categories empty in both samples are dropped.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> TestResult {
    assert_eq!(a.len(), b.len(), "category counts must align");
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut cats = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let t = (x + y) as f64;
        if t == 0.0 {
            continue;
        }
        cats += 1;
        let ea = t * na / (na + nb);
        let eb = t * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    chi_result(stat, cats.saturating_sub(1))
}

/// Pearson goodness-of-fit against probabilities `p` (summing to 1).
pub fn chi_square_gof(counts: &[u64], p: &[f64]) -> TestResult {
    assert_eq!(counts.len(), p.len(), "category counts must align");
    let n: f64 = counts.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut cats = 0usize;
    for (&c, &q) in counts.iter().zip(p) {
        if q <= 0.0 {
            if c > 0 {
                return TestResult { statistic: f64::INFINITY, p_value: 0.0 };
            }
            continue;
        }
        cats += 1;
        let e = n * q;
        stat += (c as f64 - e).powi(2) / e;
    }
    chi_result(stat, cats.saturating_sub(1))
}

fn chi_result(stat: f64, df: usize) -> TestResult {
    if df == 0 {
        return TestResult { statistic: stat, p_value: 1.0 };
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    TestResult { statistic: stat, p_value: dist.sf(stat) }
}
