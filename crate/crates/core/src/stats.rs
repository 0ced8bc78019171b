//! Small statistical helpers: normal tail probabilities, Kolmogorov–Smirnov
//! distances and summaries of replicate samples.

use std::f64::consts::SQRT_2;

use libm::erfc;
use serde::{Deserialize, Serialize};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `2(1 − Φ(|z|))`, computed through `erfc` to keep tail accuracy.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / SQRT_2).min(1.0)
}

/// `1 − Φ(z)`.
pub fn upper_p(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `Φ(z)`.
pub fn lower_p(z: f64) -> f64 {
    normal_cdf(z)
}

/// Sum by recursive halving, so the rounding pattern depends only on the
/// order of the input.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if x.len() <= LEAF {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub se: f64,
}

impl Summary {
    pub fn of(x: &[f64]) -> Summary {
        let count = x.len();
        if count == 0 {
            return Summary {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = pairwise_sum(x) / count as f64;
        let dev: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
        let variance = if count > 1 {
            pairwise_sum(&dev) / (count - 1) as f64
        } else {
            0.0
        };
        Summary {
            count,
            mean,
            variance,
            se: (variance / count as f64).sqrt(),
        }
    }

    /// Standard error of the sample variance under normality.
    pub fn variance_se(&self) -> f64 {
        self.variance * (2.0 / (self.count as f64 - 1.0)).sqrt()
    }
}

/// Sample covariance matrix of row vectors, with pairwise reductions.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows.first().map_or(0, Vec::len);
    let r = rows.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|j| pairwise_sum(&rows.iter().map(|row| row[j]).collect::<Vec<_>>()) / r)
        .collect();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let prods: Vec<f64> = rows
                .iter()
                .map(|row| (row[i] - means[i]) * (row[j] - means[j]))
                .collect();
            let c = pairwise_sum(&prods) / (r - 1.0);
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    out
}

/// One-sample Kolmogorov–Smirnov distance `sup |F_emp − F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail probability `P(D_n > d)` with Stephens'
/// finite-sample adjustment of the argument.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS test of `sample` against the standard normal law.
pub fn ks_normal(sample: &[f64]) -> KsResult {
    let statistic = ks_statistic(sample, normal_cdf);
    KsResult {
        statistic,
        p_value: kolmogorov_p(statistic, sample.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_values() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(two_sided_p(1.959963984540054), 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(
            two_sided_p(-1.0),
            2.0 * (1.0 - normal_cdf(1.0)),
            epsilon = 1e-14
        );
        assert_eq!(two_sided_p(0.0), 1.0);
        assert_abs_diff_eq!(upper_p(1.0) + lower_p(1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Classical asymptotic critical values.
        assert_abs_diff_eq!(
            kolmogorov_p(1.3581 / 1e4, 100_000_000),
            0.05,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            kolmogorov_p(1.6276 / 1e4, 100_000_000),
            0.01,
            epsilon = 1e-4
        );
        assert_eq!(kolmogorov_p(0.0, 10), 1.0);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&u, |x| x.clamp(0.0, 1.0));
        assert_abs_diff_eq!(d, 0.5 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn summaries() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_abs_diff_eq!(s.variance, 5.0 / 3.0, epsilon = 1e-15);
        let c = covariance(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert_abs_diff_eq!(c[0][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[0][1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1][1], 4.0, epsilon = 1e-15);
        let big: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&big), 499_500.0);
    }
}
