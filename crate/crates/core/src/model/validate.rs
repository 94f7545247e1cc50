use serde::{Deserialize, Serialize};

use super::coefficients::SdeCoefficients;
use super::generator::GeneratorSpec;
use crate::error::{LabError, Result};

/// Slack on sampled inequalities `lhs <= rhs`: `rhs + rel * |rhs| + abs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-12,
        }
    }
}

impl Tolerance {
    #[inline]
    pub fn allows(&self, lhs: f64, rhs: f64) -> bool {
        lhs <= rhs + self.rel * rhs.abs() + self.abs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub clause: String,
    pub passed: bool,
    pub samples: usize,
    /// Largest `lhs - rhs` seen (negative when every sample has room).
    pub worst_excess: f64,
    /// Largest `lhs / rhs` among samples with `rhs > 0`.
    pub worst_ratio: Option<f64>,
    pub witness: Option<String>,
}

impl ClauseReport {
    fn new(clause: &str) -> Self {
        Self {
            clause: clause.to_string(),
            passed: true,
            samples: 0,
            worst_excess: f64::NEG_INFINITY,
            worst_ratio: None,
            witness: None,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, tol: Tolerance, point: impl FnOnce() -> String) {
        self.samples += 1;
        let excess = lhs - rhs;
        if rhs > 0.0 {
            let r = lhs / rhs;
            self.worst_ratio = Some(self.worst_ratio.map_or(r, |w| w.max(r)));
        }
        if excess > self.worst_excess {
            self.worst_excess = excess;
            self.witness = Some(point());
        }
        if !tol.allows(lhs, rhs) {
            self.passed = false;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub clauses: Vec<ClauseReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseReport> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

/// Sample points for the generator checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorSamplePlan {
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<Vec<f64>>,
    /// Brownian values at which a path-functional alpha is realized.
    pub brownian: Vec<Vec<f64>>,
}

impl GeneratorSamplePlan {
    /// Uniform lattice over `|y| <= y_max`, `|z| <= z_max` along each axis and
    /// the diagonal of `R^d`, at the given times.
    pub fn lattice(
        times: Vec<f64>,
        y_max: f64,
        n_y: usize,
        z_max: f64,
        n_z: usize,
        dim_z: usize,
    ) -> Self {
        let line = |max: f64, n: usize| -> Vec<f64> {
            if n <= 1 {
                return vec![0.0];
            }
            (0..n)
                .map(|i| -max + 2.0 * max * i as f64 / (n - 1) as f64)
                .collect()
        };
        let ys = line(y_max, n_y);
        let levels = line(z_max, n_z);
        let mut zs = Vec::new();
        for &l in &levels {
            for axis in 0..dim_z {
                let mut z = vec![0.0; dim_z];
                z[axis] = l;
                zs.push(z);
            }
            if dim_z > 1 {
                zs.push(vec![l / (dim_z as f64).sqrt(); dim_z]);
            }
        }
        let brownian = line(2.0, 5).into_iter().map(|b| vec![b; dim_z]).collect();
        Self {
            times,
            ys,
            zs,
            brownian,
        }
    }

    fn is_empty(&self) -> bool {
        self.times.is_empty() || self.ys.is_empty() || self.zs.is_empty()
    }
}

fn fmt_point(t: f64, y: f64, z: &[f64], b: &[f64]) -> String {
    format!("t={t}, y={y}, z={z:?}, B={b:?}")
}

/// Sampled check of monotonicity `y (g(t,y,z) - g(t,0,z)) <= beta |y|^2` and
/// growth `|g| <= alpha_t + phi(|y|) + (gamma/2)|z|^2`.
///
/// Continuity in `(y, z)` is not checked: it cannot be decided from a black box.
pub fn validate_assumption_a(
    gen: &GeneratorSpec,
    plan: &GeneratorSamplePlan,
    tol: Tolerance,
) -> Result<ValidationReport> {
    if plan.is_empty() {
        return Err(LabError::Precondition(
            "generator sample plan is empty".into(),
        ));
    }
    if let Some(z) = plan.zs.iter().find(|z| z.len() != gen.dim_z) {
        return Err(LabError::Dimension {
            expected: gen.dim_z,
            got: z.len(),
            context: "sample plan z",
        });
    }
    let default_b = vec![vec![0.0; gen.dim_z]];
    let browns = if gen.alpha.is_path_dependent() && !plan.brownian.is_empty() {
        &plan.brownian
    } else {
        &default_b
    };

    let mut mono = ClauseReport::new("monotonicity");
    let mut growth = ClauseReport::new("convex_growth");
    let mut alpha_sign = ClauseReport::new("alpha_nonnegative");
    for &t in &plan.times {
        for b in browns {
            let a = gen.alpha.value(t, b);
            alpha_sign.record(-a, 0.0, tol, || fmt_point(t, f64::NAN, &[], b));
            if let Some(sup) = gen.alpha.sup_bound {
                alpha_sign.record(a, sup, tol, || fmt_point(t, f64::NAN, &[], b));
            }
            for z in &plan.zs {
                let g0 = checked(gen.eval_with_alpha(t, 0.0, z, a), t, 0.0, z, b)?;
                let z2: f64 = z.iter().map(|v| v * v).sum();
                for &y in &plan.ys {
                    let g = checked(gen.eval_with_alpha(t, y, z, a), t, y, z, b)?;
                    mono.record(y * (g - g0), gen.beta * y * y, tol, || {
                        fmt_point(t, y, z, b)
                    });
                    let bound = a + gen.phi.at(y.abs()) + 0.5 * gen.gamma * z2;
                    growth.record(g.abs(), bound, tol, || fmt_point(t, y, z, b));
                }
            }
        }
    }
    Ok(ValidationReport {
        subject: gen.name().to_string(),
        clauses: vec![mono, growth, alpha_sign],
    })
}

fn checked(v: f64, t: f64, y: f64, z: &[f64], b: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::Evaluation {
            point: fmt_point(t, y, z, b),
            reason: format!("generator returned {v}"),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientSamplePlan {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl CoefficientSamplePlan {
    /// Points on the segment `[-x_max, x_max]` along each axis and the diagonal.
    pub fn lattice(times: Vec<f64>, x_max: f64, n: usize, dim_x: usize) -> Self {
        let mut points = Vec::new();
        for i in 0..n {
            let l = -x_max + 2.0 * x_max * i as f64 / (n.max(2) - 1) as f64;
            for axis in 0..dim_x {
                let mut x = vec![0.0; dim_x];
                x[axis] = l;
                points.push(x);
            }
            if dim_x > 1 {
                points.push(vec![l; dim_x]);
            }
        }
        Self { times, points }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Empirical Lipschitz and linear-growth ratios of `b` and `sigma`
/// (Frobenius norm for `sigma`) against the declared `mu` and `nu`.
pub fn validate_coefficients(
    coeffs: &SdeCoefficients,
    plan: &CoefficientSamplePlan,
    tol: Tolerance,
) -> Result<ValidationReport> {
    if plan.times.is_empty() || plan.points.len() < 2 {
        return Err(LabError::Precondition(
            "coefficient sample plan needs >= 2 points".into(),
        ));
    }
    let eval = |t: f64, x: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != coeffs.dim_x {
            return Err(LabError::Dimension {
                expected: coeffs.dim_x,
                got: x.len(),
                context: "sample plan x",
            });
        }
        let b = coeffs.drift(t, x);
        let s = coeffs.diffusion(t, x);
        if b.iter().chain(&s).any(|v| !v.is_finite()) {
            return Err(LabError::Evaluation {
                point: format!("t={t}, x={x:?}"),
                reason: "coefficient returned a non-finite value".into(),
            });
        }
        Ok((b, s))
    };

    let mut lip = ClauseReport::new("lipschitz");
    let mut growth = ClauseReport::new("linear_growth");
    for &t in &plan.times {
        let values = plan
            .points
            .iter()
            .map(|x| eval(t, x))
            .collect::<Result<Vec<_>>>()?;
        for (i, x) in plan.points.iter().enumerate() {
            let (b, s) = &values[i];
            growth.record(norm(b) + norm(s), coeffs.nu * (1.0 + norm(x)), tol, || {
                format!("t={t}, x={x:?}")
            });
            for (j, y) in plan.points.iter().enumerate().skip(i + 1) {
                let dist = diff_norm(x, y);
                if dist == 0.0 {
                    continue;
                }
                let (by, sy) = &values[j];
                let lhs = diff_norm(b, by) + diff_norm(s, sy);
                // Compare ratios so that worst_ratio reads as an empirical constant.
                lip.record(lhs / dist, coeffs.mu, tol, || {
                    format!("t={t}, x={x:?}, y={y:?}")
                });
            }
        }
    }
    Ok(ValidationReport {
        subject: coeffs.name().to_string(),
        clauses: vec![lip, growth],
    })
}
