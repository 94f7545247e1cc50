//! Localization of a generator around an anchor `(y, x, q)`:
//! `|g(t, yb, zb + sigma*(t, xb) q) - g(t, y, sigma*(t, x) q)|
//!   <= (n/2) phi(2|yb - y|) + 2 n lambda (|zb|^2 + |xb - x|^2) + psi_n(t)`.

use serde::{Deserialize, Serialize};

use super::lattice::{LatticeSearch, Sense};
use crate::error::{LabError, Result};
use crate::model::{GeneratorSpec, SdeCoefficients};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationContext {
    pub y: f64,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub nu: f64,
    pub gamma: f64,
    lambda: f64,
}

impl LocalizationContext {
    pub fn new(y: f64, x: Vec<f64>, q: Vec<f64>, gamma: f64, nu: f64) -> Result<Self> {
        if x.len() != q.len() {
            return Err(LabError::Dimension {
                expected: x.len(),
                got: q.len(),
                context: "q must live in the state space",
            });
        }
        if !(gamma > 0.0 && nu >= 0.0) {
            return Err(LabError::Domain(format!(
                "need gamma > 0 and nu >= 0, got {gamma}, {nu}"
            )));
        }
        let q2: f64 = q.iter().map(|v| v * v).sum();
        let lambda = gamma * (1.0 + 2.0 * q2 * nu * nu);
        Ok(Self {
            y,
            x,
            q,
            nu,
            gamma,
            lambda,
        })
    }

    /// `gamma (1 + 2 |q|^2 nu^2)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn q_norm_sq(&self) -> f64 {
        self.q.iter().map(|v| v * v).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationProbe {
    pub y_bar: f64,
    pub z_bar: Vec<f64>,
    pub x_bar: Vec<f64>,
}

/// `per_axis` evenly spaced values on `[-half_width, half_width]` around the
/// anchor in every coordinate of `(yb, zb, xb)`.
pub fn probe_lattice(
    ctx: &LocalizationContext,
    dim_z: usize,
    half_width: f64,
    per_axis: usize,
) -> Vec<LocalizationProbe> {
    let m = ctx.x.len();
    let k = 1 + dim_z + m;
    let offsets: Vec<f64> = (0..per_axis)
        .map(|i| {
            if per_axis == 1 {
                0.0
            } else {
                -half_width + 2.0 * half_width * i as f64 / (per_axis - 1) as f64
            }
        })
        .collect();
    let total = per_axis.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = Vec::with_capacity(k);
            for _ in 0..k {
                c.push(offsets[idx % per_axis]);
                idx /= per_axis;
            }
            LocalizationProbe {
                y_bar: ctx.y + c[0],
                z_bar: c[1..1 + dim_z].to_vec(),
                x_bar: ctx
                    .x
                    .iter()
                    .zip(&c[1 + dim_z..])
                    .map(|(a, b)| a + b)
                    .collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub y_bar: f64,
    pub z_bar: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub n: usize,
    pub t: f64,
    pub lambda: f64,
    /// `f(t, y, 0, x) = g(t, y, sigma*(t, x) q)`.
    pub f_anchor: f64,
    pub psi_sup: f64,
    pub psi_inf: f64,
    pub psi: f64,
    pub alpha_t: f64,
    pub m_const: f64,
    /// `psi <= 4 alpha_t + M`.
    pub psi_within_bound: bool,
    pub rows: Vec<ProbeRow>,
    pub violations: usize,
    /// Smallest `rhs - lhs` over the probes.
    pub worst_slack: f64,
    pub witness: Option<String>,
}

impl LocalizationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.psi_within_bound
    }
}

/// `M = 8 gamma |q|^2 nu^2 + phi(2|y|) + 2 phi(|y|) + 6 lambda |x|^2`.
pub fn localization_constant(gen: &GeneratorSpec, ctx: &LocalizationContext) -> f64 {
    let x2: f64 = ctx.x.iter().map(|v| v * v).sum();
    8.0 * ctx.gamma * ctx.q_norm_sq() * ctx.nu * ctx.nu
        + gen.phi.at(2.0 * ctx.y.abs())
        + 2.0 * gen.phi.at(ctx.y.abs())
        + 6.0 * ctx.lambda * x2
}

pub struct LocalizationSettings {
    pub refine_tol: f64,
    pub max_rounds: usize,
    /// Absolute slack of the probe inequality.
    pub tol: f64,
}

impl Default for LocalizationSettings {
    fn default() -> Self {
        Self {
            refine_tol: 1e-10,
            max_rounds: 40,
            tol: 1e-8,
        }
    }
}

/// Compute `psi_n(t)` from the sup/inf lattice constructions and check the
/// localization inequality on every probe.
#[allow(clippy::too_many_arguments)]
pub fn generator_localization(
    gen: &GeneratorSpec,
    ctx: &LocalizationContext,
    coeffs: &SdeCoefficients,
    n: usize,
    t: f64,
    brownian: &[f64],
    probes: &[LocalizationProbe],
    settings: &LocalizationSettings,
) -> Result<LocalizationReport> {
    if n == 0 {
        return Err(LabError::Precondition("n must be at least 1".into()));
    }
    let m = coeffs.dim_x;
    let d = gen.dim_z;
    if ctx.x.len() != m || coeffs.dim_w != d {
        return Err(LabError::Dimension {
            expected: m,
            got: ctx.x.len(),
            context: "anchor state vs coefficients",
        });
    }
    let alpha_t = gen.alpha.value(t, brownian);
    let lambda = ctx.lambda;
    let f = |u: f64, v: &[f64], w: &[f64]| -> f64 {
        let shift = coeffs.sigma_transpose_times(t, w, &ctx.q);
        let z: Vec<f64> = v.iter().zip(&shift).map(|(a, b)| a + b).collect();
        gen.eval_with_alpha(t, u, &z, alpha_t)
    };
    let zero_z = vec![0.0; d];
    let f_anchor = f(ctx.y, &zero_z, &ctx.x);
    let penalty = |u: f64, v: &[f64], w: &[f64]| -> f64 {
        let v2: f64 = v.iter().map(|a| a * a).sum();
        let w2: f64 = w.iter().zip(&ctx.x).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * n as f64 * gen.phi.at(2.0 * (u - ctx.y).abs()) + 2.0 * n as f64 * lambda * (v2 + w2)
    };

    // Confinement: at an optimizer,
    // (n-1)/2 phi(2|u-y|) + (2n-1) lambda |v|^2 + 2(n-1) lambda |w-x|^2 <= C.
    let x2: f64 = ctx.x.iter().map(|v| v * v).sum();
    let alpha_hat = gen.alpha.sup_bound.unwrap_or(alpha_t).max(alpha_t)
        + 2.0 * ctx.gamma * ctx.q_norm_sq() * ctx.nu * ctx.nu;
    let c = 2.0 * alpha_hat + gen.phi.at(2.0 * ctx.y.abs()) + 3.0 * lambda * x2 + 1e-9;
    let pad = |r: f64| 1.05 * r + 1e-6;
    let (r_u, r_w) = if n > 1 {
        (
            pad(gen.phi.inverse(2.0 * c / (n - 1) as f64)? / 2.0),
            pad((c / (2.0 * (n - 1) as f64 * lambda)).sqrt()),
        )
    } else {
        (10.0, 10.0)
    };
    let r_v = pad((c / ((2 * n - 1) as f64 * lambda)).sqrt());
    let mut center = vec![ctx.y];
    center.extend(std::iter::repeat_n(0.0, d));
    center.extend_from_slice(&ctx.x);
    let mut radii = vec![r_u];
    radii.extend(std::iter::repeat_n(r_v, d));
    radii.extend(std::iter::repeat_n(r_w, m));
    let search = LatticeSearch::new(center, radii, settings.refine_tol, settings.max_rounds);
    let split = |p: &[f64]| (p[0], p[1..1 + d].to_vec(), p[1 + d..].to_vec());
    let (psi_sup, _) = search.optimize(
        |p| {
            let (u, v, w) = split(p);
            f(u, &v, &w) - penalty(u, &v, &w)
        },
        Sense::Max,
    )?;
    let (psi_inf, _) = search.optimize(
        |p| {
            let (u, v, w) = split(p);
            f(u, &v, &w) + penalty(u, &v, &w)
        },
        Sense::Min,
    )?;
    let psi = (psi_sup - f_anchor).abs() + (psi_inf - f_anchor).abs();
    let m_const = localization_constant(gen, ctx);
    let psi_within_bound = psi <= 4.0 * alpha_t + m_const + settings.tol;

    let mut rows = Vec::with_capacity(probes.len());
    let mut violations = 0;
    let mut worst_slack = f64::INFINITY;
    let mut witness = None;
    for pr in probes {
        if pr.z_bar.len() != d || pr.x_bar.len() != m {
            return Err(LabError::Dimension {
                expected: d + m,
                got: pr.z_bar.len() + pr.x_bar.len(),
                context: "localization probe",
            });
        }
        let lhs = (f(pr.y_bar, &pr.z_bar, &pr.x_bar) - f_anchor).abs();
        let rhs = penalty(pr.y_bar, &pr.z_bar, &pr.x_bar) + psi;
        let ok = lhs <= rhs + settings.tol;
        if !ok {
            violations += 1;
            witness.get_or_insert_with(|| format!("{pr:?}: lhs = {lhs}, rhs = {rhs}"));
        }
        worst_slack = worst_slack.min(rhs - lhs);
        rows.push(ProbeRow {
            y_bar: pr.y_bar,
            z_bar: pr.z_bar.clone(),
            x_bar: pr.x_bar.clone(),
            lhs,
            rhs,
            ok,
        });
    }
    if !psi_within_bound {
        witness.get_or_insert_with(|| {
            format!(
                "psi = {psi} exceeds 4 alpha + M = {}",
                4.0 * alpha_t + m_const
            )
        });
    }
    Ok(LocalizationReport {
        n,
        t,
        lambda,
        f_anchor,
        psi_sup,
        psi_inf,
        psi,
        alpha_t,
        m_const,
        psi_within_bound,
        rows,
        violations,
        worst_slack,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    fn quad_psi(gamma: f64, q: f64, lambda: f64, n: usize) -> f64 {
        let a = gamma / 2.0;
        let b = 2.0 * n as f64 * lambda;
        a * a * q * q * (1.0 / (b - a) + 1.0 / (b + a))
    }

    #[test]
    fn lambda_identity() {
        let ctx = LocalizationContext::new(0.3, vec![1.0, 2.0], vec![0.5, -1.0], 2.0, 1.5).unwrap();
        assert_eq!(ctx.lambda(), 2.0 * (1.0 + 2.0 * 1.25 * 2.25));
    }

    #[test]
    fn pure_quadratic_matches_closed_form() {
        let gen = presets::pure_quadratic(1.0, 1).unwrap();
        let coeffs = SdeCoefficients::brownian(1);
        let ctx = LocalizationContext::new(0.0, vec![0.0], vec![1.0], 1.0, coeffs.nu).unwrap();
        assert_eq!(ctx.lambda(), 3.0);
        let mut prev = f64::INFINITY;
        for n in [8usize, 32, 128] {
            let probes = probe_lattice(&ctx, 1, 2.0, 5);
            let rep = generator_localization(
                &gen,
                &ctx,
                &coeffs,
                n,
                0.0,
                &[0.0],
                &probes,
                &LocalizationSettings::default(),
            )
            .unwrap();
            let want = quad_psi(1.0, 1.0, 3.0, n);
            assert!(
                (rep.psi - want).abs() < 1e-9,
                "n = {n}: {} vs {want}",
                rep.psi
            );
            assert!(rep.passed(), "{:?}", rep.witness);
            assert!(rep.psi < prev);
            prev = rep.psi;
        }
        assert!((quad_psi(1.0, 1.0, 3.0, 8) - 0.010417_8).abs() < 1e-6);
    }

    #[test]
    fn anchor_probe_has_zero_left_side() {
        let gen = presets::mixed(&presets::MixedParams::default()).unwrap();
        let coeffs = SdeCoefficients::brownian(1);
        let ctx =
            LocalizationContext::new(0.2, vec![0.1], vec![0.5], gen.gamma, coeffs.nu).unwrap();
        let probes = vec![LocalizationProbe {
            y_bar: 0.2,
            z_bar: vec![0.0],
            x_bar: vec![0.1],
        }];
        let rep = generator_localization(
            &gen,
            &ctx,
            &coeffs,
            8,
            0.0,
            &[0.0],
            &probes,
            &LocalizationSettings::default(),
        )
        .unwrap();
        assert_eq!(rep.rows[0].lhs, 0.0);
        assert!(rep.psi >= 0.0 && rep.passed());
    }

    #[test]
    fn probe_lattice_size() {
        let ctx = LocalizationContext::new(0.0, vec![0.0], vec![1.0], 1.0, 1.0).unwrap();
        let p = probe_lattice(&ctx, 1, 1.0, 10);
        assert_eq!(p.len(), 1000);
        assert!(p.iter().any(|q| q.y_bar == -1.0 && q.z_bar == vec![1.0]));
    }
}
