//! Nonparametric tests: Wilcoxon signed-rank, Mann-Whitney U, Bonferroni
//! adjustment and Pearson correlation with a permutation p-value.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ranking::{rank_scores, Direction};

/// Largest number of non-zero differences for exact Wilcoxon enumeration.
pub const WILCOXON_EXACT_MAX: usize = 15;
/// Largest pooled sample size for exact Mann-Whitney enumeration.
pub const MANN_WHITNEY_EXACT_MAX: usize = 12;
pub const MIN_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApprox,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample sizes after any exclusions.
    pub n: Vec<usize>,
    pub method: Method,
}

fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - n.cdf(z.abs()))).min(1.0)
}

/// Midranks of `values` ascending (1-based).
fn midranks(values: &[f64]) -> Vec<f64> {
    rank_scores(values, Direction::LowerBetter)
}

/// Sum over tie groups of `t^3 - t`.
fn tie_term(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Two-sided paired test on `a - b`. Zero differences are dropped.
/// The statistic is `W+`, the rank sum of the positive differences.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite difference".into()));
    }
    if d.is_empty() {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, n: vec![0], method: Method::Exact });
    }
    let n = d.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!("need at least 5 non-zero differences, got {n}")));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();

    if n <= WILCOXON_EXACT_MAX {
        Ok(TestResult { statistic: w_plus, p_value: wilcoxon_exact_p(&ranks, w_plus), n: vec![n], method: Method::Exact })
    } else {
        Ok(TestResult {
            statistic: w_plus,
            p_value: wilcoxon_normal_p(&abs, w_plus),
            n: vec![n],
            method: Method::NormalApprox,
        })
    }
}

/// Exact two-sided p over all `2^n` sign assignments of the given ranks.
pub fn wilcoxon_exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1u64 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= w_plus + 1e-9 {
            le += 1;
        }
        if w >= w_plus - 1e-9 {
            ge += 1;
        }
    }
    let count = (1u64 << n) as f64;
    (2.0 * le.min(ge) as f64 / count).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal_p(abs_diffs: &[f64], w_plus: f64) -> f64 {
    let n = abs_diffs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(abs_diffs) / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let dev = (w_plus - mean).abs() - 0.5;
    normal_two_sided(dev.max(0.0) / var.sqrt())
}

/// Two-sided rank-sum test. The statistic is `U` of `x`.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("Mann-Whitney needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample value".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    if n1 + n2 <= MANN_WHITNEY_EXACT_MAX {
        Ok(TestResult { statistic: u, p_value: mann_whitney_exact_p(&ranks, n1, r1), n: vec![n1, n2], method: Method::Exact })
    } else {
        Ok(TestResult {
            statistic: u,
            p_value: mann_whitney_normal_p(&pooled, n1, u),
            n: vec![n1, n2],
            method: Method::NormalApprox,
        })
    }
}

/// Exact two-sided p over all `C(N, n1)` assignments of the pooled midranks.
pub fn mann_whitney_exact_p(ranks: &[f64], n1: usize, r1: f64) -> f64 {
    let n = ranks.len();
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    let mut idx: Vec<usize> = (0..n1).collect();
    loop {
        let s: f64 = idx.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if s <= r1 + 1e-9 {
            le += 1;
        }
        if s >= r1 - 1e-9 {
            ge += 1;
        }
        // next combination in lexicographic order
        let mut i = n1;
        loop {
            if i == 0 {
                return (2.0 * le.min(ge) as f64 / total as f64).min(1.0);
            }
            i -= 1;
            if idx[i] != i + n - n1 {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n1 {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Normal approximation with tie and continuity corrections.
pub fn mann_whitney_normal_p(pooled: &[f64], n1: usize, u: f64) -> f64 {
    let n2 = pooled.len() - n1;
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let mean = a * b / 2.0;
    let var = a * b / 12.0 * ((n + 1.0) - tie_term(pooled) / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let dev = (u - mean).abs() - 0.5;
    normal_two_sided(dev.max(0.0) / var.sqrt())
}

/// `min(1, p * m)` per entry.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < p_values.len() {
        return Err(Error::InvalidInput(format!("m = {m} is smaller than the {} p-values", p_values.len())));
    }
    Ok(p_values.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("samples differ in length: {} vs {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Undefined("correlation with a zero-variance sample".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson `r` with two-sided p `(1 + #{|r_perm| >= |r|}) / (1 + n_perm)`
/// over seeded permutations of `y`. Permutation `i` draws from its own RNG
/// stream so the result does not depend on thread count.
pub fn pearson_permutation(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 pairs, got {}", x.len())));
    }
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::InvalidInput(format!("need at least {MIN_PERMUTATIONS} permutations, got {n_perm}")));
    }
    let r = pearson_r(x, y)?;
    let hits: usize = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut yp = y.to_vec();
            yp.shuffle(&mut rng);
            let rp = pearson_r(x, &yp).expect("permutation keeps variance");
            usize::from(rp.abs() >= r.abs() - 1e-12)
        })
        .sum();
    Ok(TestResult {
        statistic: r,
        p_value: (1 + hits) as f64 / (1 + n_perm) as f64,
        n: vec![x.len()],
        method: Method::Permutation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wilcoxon_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);

        let b: Vec<f64> = a.iter().map(|v| v - 0.5 * v).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, Method::Exact);
        assert_abs_diff_eq!(r.p_value, 0.03125, epsilon = 1e-15);
        assert_eq!(r.statistic, 21.0);
        assert!(wilcoxon_signed_rank(&a[..4], &b[..4]).is_err());
    }

    #[test]
    fn wilcoxon_exact_vs_normal_at_crossover() {
        let d: [f64; 15] = [1.2, -0.4, 2.5, 3.1, -1.7, 0.9, 4.4, 2.2, -0.6, 1.9, 3.8, -2.9, 0.3, 5.1, 2.7];
        let zeros = [0.0; 15];
        let exact = wilcoxon_signed_rank(&d, &zeros).unwrap();
        assert_eq!(exact.method, Method::Exact);
        let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        let approx = wilcoxon_normal_p(&abs, exact.statistic);
        assert!((exact.p_value - approx).abs() < 0.01, "{} vs {approx}", exact.p_value);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 0.1, epsilon = 1e-15);

        let x = [1.0, 3.0, 5.0, 7.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.statistic, 8.0);
        assert_eq!(r.p_value, 1.0);
        assert!(mann_whitney_u(&[], &x).is_err());
    }

    #[test]
    fn mann_whitney_exact_vs_normal_at_crossover() {
        let x = [1.1, 2.3, 3.9, 5.2, 6.0, 8.4];
        let y = [2.9, 4.4, 7.1, 7.7, 9.3, 10.5];
        let exact = mann_whitney_u(&x, &y).unwrap();
        assert_eq!(exact.method, Method::Exact);
        let pooled: Vec<f64> = x.iter().chain(&y).copied().collect();
        let approx = mann_whitney_normal_p(&pooled, 6, exact.statistic);
        assert!((exact.p_value - approx).abs() < 0.01, "{} vs {approx}", exact.p_value);
    }

    #[test]
    fn bonferroni_examples() {
        assert_abs_diff_eq!(bonferroni(&[0.01], 5).unwrap()[0], 0.05, epsilon = 1e-15);
        assert_eq!(bonferroni(&[0.5], 3).unwrap(), vec![1.0]);
        assert_eq!(bonferroni(&[0.2, 0.3], 2).unwrap(), vec![0.4, 0.6]);
        assert_eq!(bonferroni(&[0.2], 1).unwrap(), vec![0.2]);
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let r = pearson_permutation(&x, &x, 999, 7).unwrap();
        assert_abs_diff_eq!(r.statistic, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.001, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson_r(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(pearson_r(&x, &[1.0; 20]), Err(Error::Undefined(_))));
        assert!(pearson_permutation(&x, &x, 100, 7).is_err());
    }

    #[test]
    fn pearson_independent_noise() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let r = pearson_permutation(&x, &y, 1999, 11).unwrap();
        assert!(r.statistic.abs() < 0.3);
        assert!(r.p_value > 0.05, "p = {}", r.p_value);
        assert_eq!(pearson_permutation(&x, &y, 1999, 11).unwrap(), r);
    }
}
