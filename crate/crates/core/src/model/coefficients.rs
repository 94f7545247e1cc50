use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};

/// `(t, x, out)`; writes the coefficient value into `out`.
pub type CoeffFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Drift `b: R^m -> R^m` and diffusion `sigma: R^m -> R^{m x d}` (row-major)
/// with their Lipschitz constant `mu` and linear-growth constant `nu`.
#[derive(Clone)]
pub struct SdeCoefficients {
    name: String,
    drift: Arc<CoeffFn>,
    diffusion: Arc<CoeffFn>,
    pub mu: f64,
    pub nu: f64,
    pub dim_x: usize,
    pub dim_w: usize,
}

impl fmt::Debug for SdeCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeCoefficients")
            .field("name", &self.name)
            .field("mu", &self.mu)
            .field("nu", &self.nu)
            .field("dim_x", &self.dim_x)
            .field("dim_w", &self.dim_w)
            .finish()
    }
}

impl SdeCoefficients {
    pub fn new(
        name: impl Into<String>,
        dim_x: usize,
        dim_w: usize,
        mu: f64,
        nu: f64,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim_x == 0 || dim_w == 0 {
            return Err(LabError::Domain(
                "state and noise dimensions must be positive".into(),
            ));
        }
        if !(mu >= 0.0 && nu >= 0.0) {
            return Err(LabError::Domain(format!(
                "mu, nu must be >= 0, got {mu}, {nu}"
            )));
        }
        Ok(Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            mu,
            nu,
            dim_x,
            dim_w,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    #[inline]
    pub fn diffusion_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x];
        self.drift_into(t, x, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x * self.dim_w];
        self.diffusion_into(t, x, &mut out);
        out
    }

    /// `sigma^*(t, x) q`, a vector in `R^d`.
    pub fn sigma_transpose_times(&self, t: f64, x: &[f64], q: &[f64]) -> Vec<f64> {
        let s = self.diffusion(t, x);
        (0..self.dim_w)
            .map(|j| (0..self.dim_x).map(|i| s[i * self.dim_w + j] * q[i]).sum())
            .collect()
    }

    /// `b = 0`, `sigma = I_d`: the state is the Brownian motion itself.
    pub fn brownian(d: usize) -> Self {
        Self::new(
            "brownian",
            d,
            d,
            0.0,
            (d as f64).sqrt(),
            |_, _, out| out.fill(0.0),
            move |_, _, out| identity_into(d, out),
        )
        .expect("brownian coefficients are valid")
    }

    /// `b = b0` constant, `sigma = I`.
    pub fn constant_drift(b0: Vec<f64>) -> Result<Self> {
        let d = b0.len();
        let nu = b0.iter().map(|v| v * v).sum::<f64>().sqrt() + (d as f64).sqrt();
        Self::new(
            "constant_drift",
            d,
            d,
            0.0,
            nu,
            move |_, _, out| out.copy_from_slice(&b0),
            move |_, _, out| identity_into(d, out),
        )
    }

    /// `b = 0`, `sigma = 0`.
    pub fn frozen(m: usize, d: usize) -> Result<Self> {
        Self::new(
            "frozen",
            m,
            d,
            0.0,
            0.0,
            |_, _, out| out.fill(0.0),
            |_, _, out| out.fill(0.0),
        )
    }

    /// `b = 0`, `sigma = 0` except for a constant drift: deterministic motion.
    pub fn deterministic_drift(b0: Vec<f64>, d: usize) -> Result<Self> {
        let m = b0.len();
        let nu = b0.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self::new(
            "deterministic_drift",
            m,
            d,
            0.0,
            nu,
            move |_, _, out| out.copy_from_slice(&b0),
            |_, _, out| out.fill(0.0),
        )
    }

    /// One-dimensional geometric dynamics `b = theta x`, `sigma = eta x`.
    pub fn geometric(theta: f64, eta: f64) -> Result<Self> {
        let k = theta.abs() + eta.abs();
        Self::new(
            "geometric",
            1,
            1,
            k,
            k,
            move |_, x, out| out[0] = theta * x[0],
            move |_, x, out| out[0] = eta * x[0],
        )
    }

    /// One-dimensional `b = sin x`, `sigma = 1`.
    pub fn sine_drift() -> Self {
        Self::new(
            "sine_drift",
            1,
            1,
            1.0,
            2.0,
            |_, x, out| out[0] = x[0].sin(),
            |_, _, out| out[0] = 1.0,
        )
        .expect("sine coefficients are valid")
    }

    /// One-dimensional `b = slope x`, `sigma = 0`, declared with constants `mu`, `nu`.
    pub fn linear_drift(slope: f64, mu: f64, nu: f64) -> Result<Self> {
        Self::new(
            "linear_drift",
            1,
            1,
            mu,
            nu,
            move |_, x, out| out[0] = slope * x[0],
            |_, _, out| out[0] = 0.0,
        )
    }
}

fn identity_into(d: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_transpose() {
        let c = SdeCoefficients::new(
            "m",
            2,
            1,
            0.0,
            1.0,
            |_, _, o| o.fill(0.0),
            |_, _, o| {
                o[0] = 2.0;
                o[1] = 3.0;
            },
        )
        .unwrap();
        assert_eq!(
            c.sigma_transpose_times(0.0, &[0.0, 0.0], &[1.0, 1.0]),
            vec![5.0]
        );
    }
}
