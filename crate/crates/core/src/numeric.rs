//! Deterministic reductions and small statistics helpers. Sums over paths are
//! taken over fixed-size chunks and combined in index order, so results do
//! not depend on the size of the worker pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub(crate) const CHUNK: usize = 4096;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    /// `|self - other|` measured in combined standard errors.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        let diff = (self.value - other.value).abs();
        if se == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / se
        }
    }
}

/// `sum_i f(i)` for `i in 0..n`, reduced chunk by chunk in index order.
pub(crate) fn det_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Mean and sample standard deviation (two-pass).
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = det_sum(n, |i| values[i]) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = det_sum(n, |i| (values[i] - mean).powi(2));
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Sample mean with standard error `sd / sqrt(n)`.
pub fn mean_estimate(values: &[f64]) -> Estimate {
    let (m, sd) = mean_sd(values);
    Estimate::new(m, sd / (values.len() as f64).sqrt())
}

/// Ordinary least squares fit `y = a + b x`, returning `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_sum_matches_closed_form() {
        let n = 10_001;
        let s = det_sum(n, |i| i as f64);
        assert_eq!(s, (n * (n - 1) / 2) as f64);
    }

    #[test]
    fn det_sum_is_pool_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e3 + 1e-7 * i as f64;
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| det_sum(50_000, f));
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| det_sum(50_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mean_sd_small_sample() {
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b) = linear_fit(&x, &y).unwrap();
        assert!((a - 2.0).abs() < 1e-14 && (b + 0.5).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn z_score_handles_zero_error() {
        let a = Estimate::new(1.0, 0.0);
        assert_eq!(a.z_score(&a), 0.0);
        assert!(a.z_score(&Estimate::new(2.0, 0.0)).is_infinite());
        assert!((a.z_score(&Estimate::new(2.0, 0.5)) - 2.0).abs() < 1e-15);
    }
}
