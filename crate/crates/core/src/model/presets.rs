//! Shipped generators. Each one satisfies the monotonicity and convex-growth
//! conditions with the constants it declares, and is continuous in `(y, z)`
//! by construction.

use serde::{Deserialize, Serialize};

use super::generator::{AlphaProcess, GeneratorSpec};
use super::modulus::ConvexModulus;
use crate::error::{LabError, Result};

#[inline]
fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

/// `g = 0`.
pub fn zero(dim_z: usize) -> GeneratorSpec {
    GeneratorSpec::new(
        "zero",
        dim_z,
        0.0,
        1.0,
        ConvexModulus::Linear(1.0),
        AlphaProcess::zero(),
        |_, _, _, _| 0.0,
    )
    .expect("zero preset parameters are valid")
}

/// `g = -beta * y`.
pub fn linear_y(beta: f64, dim_z: usize) -> Result<GeneratorSpec> {
    GeneratorSpec::new(
        "linear_y",
        dim_z,
        beta,
        1.0,
        ConvexModulus::linear(beta.max(1.0))?,
        AlphaProcess::zero(),
        move |_, y, _, _| -beta * y,
    )
}

/// `g = (gamma / 2) |z|^2`.
pub fn pure_quadratic(gamma: f64, dim_z: usize) -> Result<GeneratorSpec> {
    GeneratorSpec::new(
        "pure_quadratic",
        dim_z,
        0.0,
        gamma,
        ConvexModulus::Linear(1.0),
        AlphaProcess::zero(),
        move |_, _, z, _| 0.5 * gamma * norm_sq(z),
    )
}

/// `g = alpha_t` for a constant `c >= 0`.
pub fn constant(c: f64, dim_z: usize) -> Result<GeneratorSpec> {
    GeneratorSpec::new(
        "constant",
        dim_z,
        0.0,
        1.0,
        ConvexModulus::Linear(1.0),
        AlphaProcess::constant(c)?,
        |_, _, _, a| a,
    )
}

/// `g = intercept + slope_y * y + z_coef . z`.
///
/// Declares `beta = max(slope_y, 0)`; the linear `z` term is absorbed into the
/// quadratic bound via `|c.z| <= |z|^2/2 + |c|^2/2`, so `gamma = 1`.
pub fn affine(intercept: f64, slope_y: f64, z_coef: Vec<f64>) -> Result<GeneratorSpec> {
    let dim_z = z_coef.len().max(1);
    let c2 = norm_sq(&z_coef);
    let alpha = AlphaProcess::constant(intercept.abs() + 0.5 * c2)?;
    GeneratorSpec::new(
        "affine",
        dim_z,
        slope_y.max(0.0),
        1.0,
        ConvexModulus::linear(slope_y.abs().max(1e-9))?,
        alpha,
        move |_, y, z, _| {
            let zc: f64 = z.iter().zip(&z_coef).map(|(u, v)| u * v).sum();
            intercept + slope_y * y + zc
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedParams {
    pub beta: f64,
    pub gamma: f64,
    /// Scale of the `ExpMinusOne` modulus.
    pub phi_scale: f64,
    /// Weight of the capped y-increasing term.
    pub c: f64,
    /// Cap `M` on `phi(|y|)` in the y-increasing term.
    pub cap: f64,
    /// `alpha_t = alpha_base + alpha_slope * min(|B_t|, 1)`.
    pub alpha_base: f64,
    pub alpha_slope: f64,
}

impl Default for MixedParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 1.0,
            phi_scale: 2.0,
            c: 0.25,
            cap: 1.0,
            alpha_base: 0.5,
            alpha_slope: 0.5,
        }
    }
}

/// `g = alpha_t - beta y^+ + c min(phi(|y|), M) + (gamma/2)|z|^2`.
///
/// The term `c min(phi(|y|), M)` increases in `y` on the positive half-line;
/// it is clipped at `M` and weighted so that `c M <= beta phi^{-1}(M)`, which
/// together with `-beta y^+` keeps `y (g(y) - g(0)) <= 0`.
pub fn mixed(params: &MixedParams) -> Result<GeneratorSpec> {
    let MixedParams {
        beta,
        gamma,
        phi_scale,
        c,
        cap,
        alpha_base,
        alpha_slope,
    } = params.clone();
    let phi = ConvexModulus::exp_minus_one(phi_scale)?;
    if !(c >= 0.0 && cap > 0.0 && alpha_base >= 0.0 && alpha_slope >= 0.0) {
        return Err(LabError::Config(
            "mixed preset needs c, alpha >= 0 and cap > 0".into(),
        ));
    }
    let knee = phi.inverse(cap)?;
    if c * cap > beta * knee * (1.0 + 1e-12) {
        return Err(LabError::Config(format!(
            "mixed preset: c * M = {} exceeds beta * phi^-1(M) = {}; monotonicity would fail",
            c * cap,
            beta * knee
        )));
    }
    let alpha = AlphaProcess::path_functional(
        move |_, b: &[f64]| {
            alpha_base + alpha_slope * b.iter().map(|v| v * v).sum::<f64>().sqrt().min(1.0)
        },
        Some(alpha_base + alpha_slope),
    );
    let phi_in = phi.clone();
    GeneratorSpec::new("mixed", 1, beta, gamma, phi, alpha, move |_, y, z, a| {
        a - beta * y.max(0.0) + c * phi_in.at(y.abs()).min(cap) + 0.5 * gamma * norm_sq(z)
    })
}

/// Resolve a preset by name with default parameters.
pub fn by_name(name: &str, dim_z: usize) -> Result<GeneratorSpec> {
    match name {
        "zero" => Ok(zero(dim_z)),
        "linear_y" => linear_y(1.0, dim_z),
        "pure_quadratic" => pure_quadratic(1.0, dim_z),
        "mixed" => mixed(&MixedParams::default()),
        "constant" => constant(1.0, dim_z),
        other => Err(LabError::Config(format!(
            "unknown generator preset '{other}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_rejects_unclipped_growth() {
        let p = MixedParams {
            c: 2.0,
            ..MixedParams::default()
        };
        assert!(mixed(&p).is_err());
    }

    #[test]
    fn shifted_generator_adds_constant() {
        let g = linear_y(1.0, 1).unwrap();
        let h = g.shifted(0.5);
        for y in [-2.0, 0.0, 3.0] {
            let a = g.eval(0.0, y, &[0.3], &[0.0]);
            let b = h.eval(0.0, y, &[0.3], &[0.0]);
            assert!((b - a - 0.5).abs() < 1e-15);
        }
        assert_eq!(h.alpha.sup_bound, Some(0.5));
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(by_name("cubic", 1), Err(LabError::Config(_))));
    }
}
