//! Least-squares conditional expectations on a finite basis.
//!
//! The target `Y_{k+1}` is regressed jointly on `psi_l(F)` and
//! `psi_l(F) * xi_j`, where `F` are the regressors at step `k` and
//! `xi = dB_k / sqrt(dt)`. The first block gives `E[Y_{k+1} | F]`, the second
//! gives `E[Y_{k+1} xi_j | F]`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::CHUNK;

/// Largest accepted condition number of the normal-equation matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// All monomials of total degree `<= degree` in the standardized regressors.
    Polynomial { degree: usize },
    /// Indicators of per-regressor quantile bins (product cells).
    PiecewiseConstant { bins: usize },
}

/// Regression output for the active paths, in input order.
#[derive(Clone, Debug)]
pub struct ConditionalFit {
    pub mean: Vec<f64>,
    /// `E[target * xi_j | F]`, row-major `n x d`.
    pub noise_coef: Vec<f64>,
    pub condition: f64,
    pub terms: usize,
}

impl ConditionalFit {
    fn constant(target: &[f64], d: usize) -> Self {
        let n = target.len();
        let m = if n == 0 {
            0.0
        } else {
            target.iter().sum::<f64>() / n as f64
        };
        Self {
            mean: vec![m; n],
            noise_coef: vec![0.0; n * d],
            condition: 1.0,
            terms: 1,
        }
    }
}

/// Monomial basis in standardized, non-degenerate regressors.
struct PolyBasis {
    active: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    exps: Vec<Vec<u32>>,
    degree: usize,
}

fn multi_indices(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; vars]];
    for total in 1..=degree {
        let mut cur = vec![0u32; vars];
        fill_total(&mut cur, 0, total as u32, &mut out);
    }
    out
}

fn fill_total(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill_total(cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
}

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Per-column mean and standard deviation of a row-major `n x q` block, with
/// columns whose spread is negligible flagged as degenerate.
fn column_stats(features: &[f64], q: usize, n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut active = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for c in 0..q {
        let m = crate::numeric::det_sum(n, |i| features[i * q + c]) / n as f64;
        let var = crate::numeric::det_sum(n, |i| (features[i * q + c] - m).powi(2)) / n as f64;
        let sd = var.sqrt();
        if sd > 1e-9 * (1.0 + m.abs()) {
            active.push(c);
            means.push(m);
            scales.push(sd);
        }
    }
    (active, means, scales)
}

impl PolyBasis {
    fn new(features: &[f64], q: usize, n: usize, degree: usize, blocks: usize) -> Self {
        let (active, means, scales) = column_stats(features, q, n);
        let mut degree = if active.is_empty() { 0 } else { degree };
        while degree > 0 && 10 * binom(active.len() + degree, degree) * blocks > n {
            degree -= 1;
        }
        let exps = multi_indices(active.len(), degree);
        Self {
            active,
            means,
            scales,
            exps,
            degree,
        }
    }

    fn len(&self) -> usize {
        self.exps.len()
    }

    fn eval(&self, row: &[f64], pow: &mut [f64], out: &mut [f64]) {
        let stride = self.degree + 1;
        for (a, &c) in self.active.iter().enumerate() {
            let u = (row[c] - self.means[a]) / self.scales[a];
            pow[a * stride] = 1.0;
            for e in 1..stride {
                pow[a * stride + e] = pow[a * stride + e - 1] * u;
            }
        }
        for (l, ex) in self.exps.iter().enumerate() {
            let mut v = 1.0;
            for (a, &e) in ex.iter().enumerate() {
                if e > 0 {
                    v *= pow[a * stride + e as usize];
                }
            }
            out[l] = v;
        }
    }
}

/// Fit `E[target | F]` and `E[target * xi | F]` on the active paths.
///
/// `features` is row-major `n x q`; `noise` is row-major `n x d` (may be
/// empty with `d = 0`, which gives a plain projection).
pub fn fit_conditional(
    basis: &Basis,
    features: &[f64],
    q: usize,
    noise: &[f64],
    d: usize,
    target: &[f64],
    step: usize,
) -> Result<ConditionalFit> {
    let n = target.len();
    if features.len() != n * q || noise.len() != n * d {
        return Err(LabError::Dimension {
            expected: n * q,
            got: features.len(),
            context: "regression design",
        });
    }
    if n < 2 * (1 + d) {
        return Ok(ConditionalFit::constant(target, d));
    }
    match *basis {
        Basis::Polynomial { degree } => fit_polynomial(degree, features, q, noise, d, target, step),
        Basis::PiecewiseConstant { bins } => {
            Ok(fit_cells(bins.max(1), features, q, noise, d, target))
        }
    }
}

fn fit_polynomial(
    degree: usize,
    features: &[f64],
    q: usize,
    noise: &[f64],
    d: usize,
    target: &[f64],
    step: usize,
) -> Result<ConditionalFit> {
    let n = target.len();
    let basis = PolyBasis::new(features, q, n, degree, 1 + d);
    let l = basis.len();
    let p = l * (1 + d);
    let pow_len = basis.active.len() * (basis.degree + 1);
    let row_of = |i: usize, pow: &mut [f64], psi: &mut [f64], row: &mut [f64]| {
        basis.eval(&features[i * q..(i + 1) * q], pow, psi);
        row[..l].copy_from_slice(psi);
        for j in 0..d {
            let xi = noise[i * d + j];
            for a in 0..l {
                row[(j + 1) * l + a] = psi[a] * xi;
            }
        }
    };

    let partial: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; p * p + p];
            let mut pow = vec![0.0; pow_len];
            let mut psi = vec![0.0; l];
            let mut row = vec![0.0; p];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                row_of(i, &mut pow, &mut psi, &mut row);
                let y = target[i];
                for a in 0..p {
                    let ra = row[a];
                    if ra == 0.0 {
                        continue;
                    }
                    let base = a * p;
                    for b in a..p {
                        acc[base + b] += ra * row[b];
                    }
                    acc[p * p + a] += ra * y;
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0; p * p + p];
    for part in &partial {
        for (s, v) in acc.iter_mut().zip(part) {
            *s += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    let gram = DMatrix::from_fn(p, p, |a, b| {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        acc[i * p + j] * inv_n
    });
    let rhs = DVector::from_fn(p, |a, _| acc[p * p + a] * inv_n);

    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max_ev = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_ev = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let condition = if min_ev > 0.0 {
        max_ev / min_ev
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        return Err(LabError::SingularRegression { step, condition });
    }
    let coef = Cholesky::new(gram)
        .ok_or(LabError::SingularRegression { step, condition })?
        .solve(&rhs);

    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut pow = vec![0.0; pow_len];
            let mut psi = vec![0.0; l];
            let rows = c * CHUNK..((c + 1) * CHUNK).min(n);
            let mut m_out = Vec::with_capacity(rows.len());
            let mut z_out = Vec::with_capacity(rows.len() * d);
            for i in rows {
                basis.eval(&features[i * q..(i + 1) * q], &mut pow, &mut psi);
                m_out.push((0..l).map(|a| coef[a] * psi[a]).sum());
                for j in 0..d {
                    z_out.push((0..l).map(|a| coef[(j + 1) * l + a] * psi[a]).sum());
                }
            }
            (m_out, z_out)
        })
        .collect();
    let mut mean = Vec::with_capacity(n);
    let mut noise_coef = Vec::with_capacity(n * d);
    for (m, z) in parts {
        mean.extend(m);
        noise_coef.extend(z);
    }
    Ok(ConditionalFit {
        mean,
        noise_coef,
        condition,
        terms: l,
    })
}

/// Cell means of the target, with the noise coefficient from a centered
/// least-squares fit inside each cell. Using the plain cell mean keeps the
/// conditional expectation inside the range of the target.
fn fit_cells(
    bins: usize,
    features: &[f64],
    q: usize,
    noise: &[f64],
    d: usize,
    target: &[f64],
) -> ConditionalFit {
    let n = target.len();
    let (active, _, _) = column_stats(features, q, n);
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(active.len());
    for &c in &active {
        let mut col: Vec<f64> = (0..n).map(|i| features[i * q + c]).collect();
        col.sort_by(|a, b| a.total_cmp(b));
        let mut cut: Vec<f64> = (1..bins).map(|j| col[j * n / bins]).collect();
        cut.dedup();
        cuts.push(cut);
    }
    let cell_of = |i: usize| -> usize {
        let mut idx = 0;
        for (a, &c) in active.iter().enumerate() {
            let v = features[i * q + c];
            idx = idx * bins + cuts[a].partition_point(|&x| x <= v);
        }
        idx
    };
    let n_cells = bins.pow(active.len() as u32);
    let cells: Vec<usize> = (0..n).map(cell_of).collect();

    let mut count = vec![0usize; n_cells];
    let mut sum_y = vec![0.0; n_cells];
    let mut sum_x = vec![0.0; n_cells * d];
    for i in 0..n {
        let c = cells[i];
        count[c] += 1;
        sum_y[c] += target[i];
        for j in 0..d {
            sum_x[c * d + j] += noise[i * d + j];
        }
    }
    let mean_y: Vec<f64> = (0..n_cells)
        .map(|c| sum_y[c] / count[c].max(1) as f64)
        .collect();
    let mut sxx = vec![0.0; n_cells * d * d];
    let mut sxy = vec![0.0; n_cells * d];
    for i in 0..n {
        let c = cells[i];
        let k = count[c] as f64;
        let dy = target[i] - mean_y[c];
        for a in 0..d {
            let xa = noise[i * d + a] - sum_x[c * d + a] / k;
            sxy[c * d + a] += xa * dy;
            for b in 0..d {
                let xb = noise[i * d + b] - sum_x[c * d + b] / k;
                sxx[(c * d + a) * d + b] += xa * xb;
            }
        }
    }
    let mut slope = vec![0.0; n_cells * d];
    for c in 0..n_cells {
        if d == 0 || count[c] < 2 * (d + 1) {
            continue;
        }
        let m = DMatrix::from_fn(d, d, |a, b| sxx[(c * d + a) * d + b]);
        let r = DVector::from_fn(d, |a, _| sxy[c * d + a]);
        if let Some(ch) = Cholesky::new(m) {
            let s = ch.solve(&r);
            for a in 0..d {
                slope[c * d + a] = s[a];
            }
        }
    }
    let mut noise_coef = vec![0.0; n * d];
    for i in 0..n {
        let c = cells[i];
        noise_coef[i * d..(i + 1) * d].copy_from_slice(&slope[c * d..(c + 1) * d]);
    }
    ConditionalFit {
        mean: cells.iter().map(|&c| mean_y[c]).collect(),
        noise_coef,
        condition: 1.0,
        terms: n_cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterNormal;

    #[test]
    fn multi_index_counts() {
        for vars in 1..4 {
            for deg in 0..5 {
                assert_eq!(multi_indices(vars, deg).len(), binom(vars + deg, deg));
            }
        }
    }

    fn sample(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let rng = CounterNormal::new(seed);
        let x = (0..n).map(|i| rng.normal(i as u64, 0, 0)).collect();
        let xi = (0..n).map(|i| rng.normal(i as u64, 1, 0)).collect();
        (x, xi)
    }

    #[test]
    fn exact_for_polynomial_targets() {
        let (x, xi) = sample(5000, 1);
        let y: Vec<f64> = x
            .iter()
            .zip(&xi)
            .map(|(a, e)| 1.0 + a * a - 0.5 * a * a * a + (2.0 - a) * e)
            .collect();
        let fit = fit_conditional(&Basis::Polynomial { degree: 3 }, &x, 1, &xi, 1, &y, 0).unwrap();
        for i in 0..x.len() {
            let a = x[i];
            assert!((fit.mean[i] - (1.0 + a * a - 0.5 * a * a * a)).abs() < 1e-9);
            assert!((fit.noise_coef[i] - (2.0 - a)).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_regressor_reduces_to_intercept() {
        let n = 1000;
        let (_, xi) = sample(n, 2);
        let x = vec![0.7; n];
        let y: Vec<f64> = xi.iter().map(|e| 3.0 + 0.25 * e).collect();
        let fit = fit_conditional(&Basis::Polynomial { degree: 3 }, &x, 1, &xi, 1, &y, 0).unwrap();
        assert_eq!(fit.terms, 1);
        assert!(fit.mean.iter().all(|m| (m - 3.0).abs() < 1e-12));
        assert!(fit.noise_coef.iter().all(|c| (c - 0.25).abs() < 1e-12));
    }

    #[test]
    fn cell_means_stay_in_target_range() {
        let (x, xi) = sample(4000, 3);
        let y: Vec<f64> = x
            .iter()
            .zip(&xi)
            .map(|(a, e)| (a + e).clamp(-1.0, 1.0))
            .collect();
        let fit =
            fit_conditional(&Basis::PiecewiseConstant { bins: 8 }, &x, 1, &xi, 1, &y, 0).unwrap();
        assert!(fit.mean.iter().all(|m| (-1.0..=1.0).contains(m)));
        assert_eq!(fit.terms, 8);
    }

    #[test]
    fn collinear_design_is_singular() {
        let n = 1000;
        let (x, _) = sample(n, 4);
        let feats: Vec<f64> = x.iter().flat_map(|&a| [a, 2.0 * a]).collect();
        let y = x.clone();
        let err = fit_conditional(&Basis::Polynomial { degree: 1 }, &feats, 2, &[], 0, &y, 7)
            .unwrap_err();
        assert!(matches!(err, LabError::SingularRegression { step: 7, .. }));
    }

    #[test]
    fn tiny_sample_falls_back_to_mean() {
        let fit = fit_conditional(
            &Basis::Polynomial { degree: 2 },
            &[1.0, 2.0],
            1,
            &[0.1, -0.1],
            1,
            &[4.0, 6.0],
            0,
        )
        .unwrap();
        assert_eq!(fit.mean, vec![5.0, 5.0]);
        assert_eq!(fit.noise_coef, vec![0.0, 0.0]);
    }

    #[test]
    fn pool_size_does_not_change_coefficients() {
        let (x, xi) = sample(20_000, 5);
        let y: Vec<f64> = x.iter().zip(&xi).map(|(a, e)| a.sin() + a * e).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    fit_conditional(&Basis::Polynomial { degree: 3 }, &x, 1, &xi, 1, &y, 0).unwrap()
                })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.noise_coef, b.noise_coef);
    }
}
