//! Small statistics toolbox for the Monte-Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `P(N > j)` for `N ~ Poisson(rate)`, summed directly in log space so that
/// tiny tails keep their relative precision.
pub fn poisson_tail(rate: f64, j: usize) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    let mut log_term = -rate;
    for k in 1..=j + 1 {
        log_term += rate.ln() - (k as f64).ln();
    }
    let mut total = 0.0;
    let mut k = j + 1;
    loop {
        let term = log_term.exp();
        total += term;
        k += 1;
        log_term += rate.ln() - (k as f64).ln();
        if (k as f64) > rate && term < total * 1e-17 {
            break;
        }
        if k > j + 100_000 {
            break;
        }
    }
    total.min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(x) = 2 sum (-1)^(k-1) exp(-2 k^2 x^2)`.
fn kolmogorov_q(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * x * x).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (including the usual small-sample correction of the argument).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("KS test needs two non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
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
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
    Ok(TestResult { statistic: d, p_value: p })
}

/// Chi-square test that two count vectors over the same categories come
/// from one distribution. Categories with a pooled count below 5 are
/// merged into one cell.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Input("count vectors differ in length".into()));
    }
    let (na, nb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    if na == 0 || nb == 0 {
        return Err(Error::Input("chi-square test needs two non-empty samples".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        if x + y >= 5 {
            cells.push((x as f64, y as f64));
        } else {
            pooled.0 += x as f64;
            pooled.1 += y as f64;
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0 });
    }
    let total = (na + nb) as f64;
    let mut stat = 0.0;
    for &(x, y) in &cells {
        let col = x + y;
        for (obs, row) in [(x, na as f64), (y, nb as f64)] {
            let expected = row * col / total;
            if expected > 0.0 {
                stat += (obs - expected).powi(2) / expected;
            }
        }
    }
    let dof = (cells.len() - 1) as f64;
    let dist = ChiSquared::new(dof).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(TestResult { statistic: stat, p_value: 1.0 - dist.cdf(stat) })
}

/// Per-test level after a Bonferroni correction over `tests` tests.
pub fn bonferroni(level: f64, tests: usize) -> f64 {
    level / tests.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ReplicaRng;

    #[test]
    fn mean_se_and_median() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn poisson_tail_values() {
        // P(N > 0) = 1 - e^-1
        assert!((poisson_tail(1.0, 0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        // P(N > 2) for rate 2 = 1 - e^-2 (1 + 2 + 2)
        let exact = 1.0 - (-2f64).exp() * 5.0;
        assert!((poisson_tail(2.0, 2) - exact).abs() < 1e-14);
        assert!(poisson_tail(1.0, 40) < 1e-40);
        assert_eq!(poisson_tail(0.0, 3), 0.0);
    }

    #[test]
    fn ks_accepts_same_law_and_rejects_shift() {
        let mut rng = ReplicaRng::new(3, 0);
        let a: Vec<f64> = (0..5000).map(|_| rng.exponential(1.0)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.exponential(1.0)).collect();
        let c: Vec<f64> = (0..5000).map(|_| rng.exponential(1.3)).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.001);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
        assert!(ks_two_sample(&a, &[]).is_err());
    }

    #[test]
    fn ks_statistic_known_value() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        let r = ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn chi_square_detects_difference() {
        let same = chi_square_homogeneity(&[500, 300, 200], &[510, 290, 200]).unwrap();
        assert!(same.p_value > 0.5);
        let diff = chi_square_homogeneity(&[500, 300, 200], &[300, 300, 400]).unwrap();
        assert!(diff.p_value < 1e-10);
        assert!(chi_square_homogeneity(&[1, 2], &[1]).is_err());
    }
}
