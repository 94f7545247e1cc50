use std::fmt;
use std::sync::Arc;

use super::modulus::ConvexModulus;
use crate::error::{LabError, Result};

/// Driver signature `(t, y, z, alpha_t) -> g`. The last argument is the
/// realized value of the generator's alpha process at `(t, omega)`; drivers
/// that do not depend on `omega` ignore it.
pub type DriverFn = dyn Fn(f64, f64, &[f64], f64) -> f64 + Send + Sync;

/// `(t, B_t) -> alpha_t`, evaluated on the Brownian value at the current grid point.
pub type PathFunctionalFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum AlphaKind {
    Constant(f64),
    /// Piecewise constant on a uniform grid starting at `t_start` with spacing `dt`.
    Deterministic {
        t_start: f64,
        dt: f64,
        values: Vec<f64>,
    },
    PathFunctional {
        f: Arc<PathFunctionalFn>,
        bounded: bool,
    },
}

impl fmt::Debug for AlphaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaKind::Constant(c) => write!(f, "Constant({c})"),
            AlphaKind::Deterministic { values, .. } => {
                write!(f, "Deterministic({} values)", values.len())
            }
            AlphaKind::PathFunctional { bounded, .. } => {
                write!(f, "PathFunctional(bounded={bounded})")
            }
        }
    }
}

/// The non-negative process bounding `|g(t, 0, 0)|` in the growth condition.
#[derive(Clone, Debug)]
pub struct AlphaProcess {
    pub kind: AlphaKind,
    /// `||alpha||_inf`, when finite.
    pub sup_bound: Option<f64>,
    /// `||int_0^T alpha_t dt||_inf` over the experiment horizon.
    pub integral_sup_bound: Option<f64>,
}

impl AlphaProcess {
    pub fn zero() -> Self {
        Self::constant(0.0).expect("zero is a valid constant")
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(LabError::Domain(format!(
                "alpha must be non-negative, got {c}"
            )));
        }
        Ok(Self {
            kind: AlphaKind::Constant(c),
            sup_bound: Some(c),
            integral_sup_bound: None,
        })
    }

    pub fn deterministic(t_start: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !(dt > 0.0) {
            return Err(LabError::Domain(
                "deterministic alpha needs values and dt > 0".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(LabError::Domain(format!(
                "alpha must be non-negative, got {v}"
            )));
        }
        let sup = values.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            kind: AlphaKind::Deterministic {
                t_start,
                dt,
                values,
            },
            sup_bound: Some(sup),
            integral_sup_bound: None,
        })
    }

    pub fn path_functional(
        f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        sup_bound: Option<f64>,
    ) -> Self {
        Self {
            kind: AlphaKind::PathFunctional {
                f: Arc::new(f),
                bounded: sup_bound.is_some(),
            },
            sup_bound,
            integral_sup_bound: None,
        }
    }

    pub fn with_integral_bound(mut self, bound: f64) -> Self {
        self.integral_sup_bound = Some(bound);
        self
    }

    #[inline]
    pub fn value(&self, t: f64, brownian: &[f64]) -> f64 {
        match &self.kind {
            AlphaKind::Constant(c) => *c,
            AlphaKind::Deterministic {
                t_start,
                dt,
                values,
            } => {
                let idx = ((t - t_start) / dt).floor().max(0.0) as usize;
                values[idx.min(values.len() - 1)]
            }
            AlphaKind::PathFunctional { f, .. } => f(t, brownian),
        }
    }

    /// `alpha + off` for `off >= 0`.
    pub fn offset(&self, off: f64) -> AlphaProcess {
        if off == 0.0 {
            return self.clone();
        }
        let kind = match &self.kind {
            AlphaKind::Constant(c) => AlphaKind::Constant(c + off),
            AlphaKind::Deterministic {
                t_start,
                dt,
                values,
            } => AlphaKind::Deterministic {
                t_start: *t_start,
                dt: *dt,
                values: values.iter().map(|v| v + off).collect(),
            },
            AlphaKind::PathFunctional { f, bounded } => {
                let f = Arc::clone(f);
                AlphaKind::PathFunctional {
                    f: Arc::new(move |t, b| f(t, b) + off),
                    bounded: *bounded,
                }
            }
        };
        AlphaProcess {
            kind,
            sup_bound: self.sup_bound.map(|s| s + off),
            integral_sup_bound: None,
        }
    }

    /// Whether alpha depends on the Brownian path.
    pub fn is_path_dependent(&self) -> bool {
        matches!(self.kind, AlphaKind::PathFunctional { .. })
    }

    /// Best available bound on `||int_s^{s+len} alpha_r dr||_inf`.
    pub fn integral_bound_over(&self, len: f64) -> Option<f64> {
        let from_sup = self.sup_bound.map(|s| s * len);
        match (from_sup, self.integral_sup_bound) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// A generator `g` together with the constants of its growth and
/// monotonicity assumptions.
#[derive(Clone)]
pub struct GeneratorSpec {
    name: String,
    driver: Arc<DriverFn>,
    pub beta: f64,
    pub gamma: f64,
    pub phi: ConvexModulus,
    pub alpha: AlphaProcess,
    pub dim_z: usize,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .field("phi", &self.phi)
            .field("alpha", &self.alpha)
            .field("dim_z", &self.dim_z)
            .finish()
    }
}

impl GeneratorSpec {
    pub fn new(
        name: impl Into<String>,
        dim_z: usize,
        beta: f64,
        gamma: f64,
        phi: ConvexModulus,
        alpha: AlphaProcess,
        driver: impl Fn(f64, f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(LabError::Domain(format!("beta must be >= 0, got {beta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(LabError::Domain(format!("gamma must be > 0, got {gamma}")));
        }
        if dim_z == 0 {
            return Err(LabError::Domain("dim_z must be at least 1".into()));
        }
        Ok(Self {
            name: name.into(),
            driver: Arc::new(driver),
            beta,
            gamma,
            phi,
            alpha,
            dim_z,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `g(t, y, z)` with alpha evaluated at `(t, B_t)`.
    #[inline]
    pub fn eval(&self, t: f64, y: f64, z: &[f64], brownian: &[f64]) -> f64 {
        let a = self.alpha.value(t, brownian);
        (self.driver)(t, y, z, a)
    }

    /// `g(t, y, z)` with an explicit realization of `alpha_t`.
    #[inline]
    pub fn eval_with_alpha(&self, t: f64, y: f64, z: &[f64], alpha: f64) -> f64 {
        (self.driver)(t, y, z, alpha)
    }

    /// `g + c`. The alpha process grows by `|c|` so the growth bound still
    /// holds; the driver subtracts the offset back out before evaluating `g`.
    pub fn shifted(&self, c: f64) -> GeneratorSpec {
        let base = Arc::clone(&self.driver);
        let off = c.abs();
        GeneratorSpec {
            name: format!("{}{:+}", self.name, c),
            driver: Arc::new(move |t, y, z, a| base(t, y, z, a - off) + c),
            beta: self.beta,
            gamma: self.gamma,
            phi: self.phi.clone(),
            alpha: self.alpha.offset(off),
            dim_z: self.dim_z,
        }
    }
}
