//! Closed-form reference values.

use crate::error::{LabError, Result};
use crate::numeric::{mean_sd, Estimate};

/// `c * exp(-beta * h)`, the solution at time 0 of `y' = beta * y`, `y(h) = c`.
pub fn oracle_linear(beta: f64, c: f64, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(LabError::Precondition(format!("horizon {h} must be >= 0")));
    }
    Ok(c * (-beta * h).exp())
}

/// Largest `gamma * |xi|` accepted before the exponential moment is
/// considered numerically meaningless.
const MAX_EXPONENT: f64 = 700.0;

/// `(1 / gamma) log mean exp(gamma xi)` with a delta-method standard error.
pub fn oracle_cole_hopf(gamma: f64, samples: &[f64]) -> Result<Estimate> {
    if !(gamma > 0.0) {
        return Err(LabError::Precondition(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    if samples.is_empty() {
        return Err(LabError::Precondition("no terminal samples".into()));
    }
    let top = samples.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let bottom = samples.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(gamma * top.abs() <= MAX_EXPONENT && gamma * bottom.abs() <= MAX_EXPONENT) {
        return Err(LabError::Overflow(format!(
            "exp(gamma * xi) overflows for gamma = {gamma}, xi in [{bottom}, {top}]; rescale the terminal or gamma"
        )));
    }
    // exp(gamma (xi - top)) lies in (0, 1]; the shift cancels in the log.
    let w: Vec<f64> = samples.iter().map(|&v| (gamma * (v - top)).exp()).collect();
    let (m, sd) = mean_sd(&w);
    let value = top + m.ln() / gamma;
    let se = sd / ((samples.len() as f64).sqrt() * m * gamma);
    Ok(Estimate::new(value, se))
}

/// [`oracle_cole_hopf`] within each group of paths sharing a cell label
/// (conditioning on a finite partition of the information at some grid
/// index). Returns one estimate per label `0..=max(cell_of)`; empty cells give
/// `None`.
pub fn oracle_cole_hopf_cells(
    gamma: f64,
    samples: &[f64],
    cell_of: &[usize],
) -> Result<Vec<Option<Estimate>>> {
    if cell_of.len() != samples.len() {
        return Err(LabError::Dimension {
            expected: samples.len(),
            got: cell_of.len(),
            context: "cell labels per sample",
        });
    }
    let n_cells = cell_of.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_cells];
    for (&c, &v) in cell_of.iter().zip(samples) {
        groups[c].push(v);
    }
    groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                Ok(None)
            } else {
                oracle_cole_hopf(gamma, g).map(Some)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterNormal;

    #[test]
    fn linear_examples() {
        assert_eq!(oracle_linear(0.0, 5.0, 1.0).unwrap(), 5.0);
        assert_eq!(oracle_linear(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert!((oracle_linear(2.0, 3.0, 0.5).unwrap() - 3.0 / std::f64::consts::E).abs() < 1e-15);
        assert!(oracle_linear(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn constant_samples_return_constant() {
        let e = oracle_cole_hopf(2.0, &[0.75; 100]).unwrap();
        assert!((e.value - 0.75).abs() < 1e-15);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn gaussian_moment_generating_function() {
        let rng = CounterNormal::new(11);
        let eps: f64 = 0.3;
        let z0 = 1.5;
        let xi: Vec<f64> = (0..200_000)
            .map(|p| z0 * eps.sqrt() * rng.normal(p, 0, 0))
            .collect();
        let gamma = 0.8;
        let est = oracle_cole_hopf(gamma, &xi).unwrap();
        let exact = 0.5 * gamma * z0 * z0 * eps;
        assert!(
            (est.value - exact).abs() < 3.0 * est.std_error,
            "{est:?} vs {exact}"
        );
    }

    #[test]
    fn small_gamma_tends_to_sample_mean() {
        let rng = CounterNormal::new(12);
        let xi: Vec<f64> = (0..10_000).map(|p| rng.normal(p, 0, 0)).collect();
        let mean = xi.iter().sum::<f64>() / xi.len() as f64;
        let est = oracle_cole_hopf(1e-4, &xi).unwrap();
        assert!((est.value - mean).abs() < 1e-3);
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(
            oracle_cole_hopf(10.0, &[0.0, 100.0]),
            Err(LabError::Overflow(_))
        ));
    }

    #[test]
    fn cells_split_samples() {
        let est = oracle_cole_hopf_cells(1.0, &[1.0, 1.0, 3.0], &[0, 0, 2]).unwrap();
        assert!((est[0].unwrap().value - 1.0).abs() < 1e-15);
        assert!(est[1].is_none());
        assert!((est[2].unwrap().value - 3.0).abs() < 1e-15);
    }
}
