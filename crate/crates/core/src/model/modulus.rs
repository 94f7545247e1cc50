use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};

/// A strictly increasing convex function on `[0, inf)` vanishing at zero.
///
/// Three parametric families are built in. Anything else goes through
/// [`ConvexModulus::custom`], which runs a sampled convexity self-check.
#[derive(Clone)]
pub enum ConvexModulus {
    /// `r^b`, `b >= 1`.
    Power(f64),
    /// `scale * (e^r - 1)`, `scale > 0`.
    ExpMinusOne(f64),
    /// `slope * r`, `slope > 0`.
    Linear(f64),
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ConvexModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexModulus::Power(b) => write!(f, "Power({b})"),
            ConvexModulus::ExpMinusOne(s) => write!(f, "ExpMinusOne({s})"),
            ConvexModulus::Linear(s) => write!(f, "Linear({s})"),
            ConvexModulus::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ConvexModulus {
    pub fn power(b: f64) -> Result<Self> {
        if !(b >= 1.0 && b.is_finite()) {
            return Err(LabError::Domain(format!(
                "power modulus needs b >= 1, got {b}"
            )));
        }
        Ok(ConvexModulus::Power(b))
    }

    pub fn exp_minus_one(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LabError::Domain(format!(
                "exp-minus-one modulus needs scale > 0, got {scale}"
            )));
        }
        Ok(ConvexModulus::ExpMinusOne(scale))
    }

    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(LabError::Domain(format!(
                "linear modulus needs slope > 0, got {slope}"
            )));
        }
        Ok(ConvexModulus::Linear(slope))
    }

    /// Accepts an arbitrary modulus after checking it on a sample lattice.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let phi = ConvexModulus::Custom {
            name: name.into(),
            f: Arc::new(f),
        };
        phi.self_check()?;
        Ok(phi)
    }

    /// `phi(r)` without the domain check. `r` must be non-negative.
    #[inline]
    pub fn at(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "modulus evaluated at negative r = {r}");
        match self {
            ConvexModulus::Power(b) => {
                if *b == 1.0 {
                    r
                } else if *b == 2.0 {
                    r * r
                } else {
                    r.powf(*b)
                }
            }
            ConvexModulus::ExpMinusOne(s) => s * r.exp_m1(),
            ConvexModulus::Linear(s) => s * r,
            ConvexModulus::Custom { f, .. } => f(r),
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(LabError::Domain(format!(
                "modulus argument must be >= 0, got {r}"
            )));
        }
        Ok(self.at(r))
    }

    /// `phi^{-1}(v)` by bisection.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(LabError::Domain(format!(
                "inverse modulus needs v >= 0, got {v}"
            )));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.at(hi) < v {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(LabError::Domain(format!("modulus never reaches {v}")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.at(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Sampled check of `phi(0) = 0`, strict monotonicity, midpoint convexity
    /// and `phi(2a) >= 2 phi(a)`.
    pub fn self_check(&self) -> Result<()> {
        let zero = self.at(0.0);
        if zero.abs() > 1e-12 {
            return Err(LabError::Domain(format!(
                "{self:?}: phi(0) = {zero}, expected 0"
            )));
        }
        let pts: Vec<f64> = (0..=200).map(|i| 0.05 * i as f64).collect();
        for w in pts.windows(2) {
            let (a, b) = (self.at(w[0]), self.at(w[1]));
            if !(b > a) {
                return Err(LabError::Domain(format!(
                    "{self:?}: not strictly increasing between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        for (i, &r) in pts.iter().enumerate() {
            for &s in &pts[i..] {
                let mid = self.at(0.5 * (r + s));
                let chord = 0.5 * (self.at(r) + self.at(s));
                if mid > chord * (1.0 + 1e-9) + 1e-12 {
                    return Err(LabError::Domain(format!(
                        "{self:?}: midpoint convexity fails on ({r}, {s})"
                    )));
                }
            }
            let twice = self.at(2.0 * r);
            if twice < 2.0 * self.at(r) * (1.0 - 1e-9) - 1e-12 {
                return Err(LabError::Domain(format!(
                    "{self:?}: phi(2a) < 2 phi(a) at a = {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluate `phi(r)`; negative `r` is a domain error.
pub fn eval_modulus(phi: &ConvexModulus, r: f64) -> Result<f64> {
    phi.eval(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_values() {
        assert_eq!(eval_modulus(&ConvexModulus::Power(1.0), 2.0).unwrap(), 2.0);
        assert_eq!(eval_modulus(&ConvexModulus::Power(2.0), 3.0).unwrap(), 9.0);
        assert_eq!(
            eval_modulus(&ConvexModulus::ExpMinusOne(1.0), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        assert!(matches!(
            eval_modulus(&ConvexModulus::Linear(1.0), -1.0),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(ConvexModulus::power(0.5).is_err());
        assert!(ConvexModulus::exp_minus_one(0.0).is_err());
        assert!(ConvexModulus::linear(-1.0).is_err());
    }

    #[test]
    fn custom_modulus_self_check() {
        assert!(ConvexModulus::custom("cosh-1", |r: f64| r.cosh() - 1.0).is_ok());
        assert!(ConvexModulus::custom("sqrt", |r: f64| r.sqrt()).is_err());
        assert!(ConvexModulus::custom("shifted", |r: f64| r + 1.0).is_err());
    }

    #[test]
    fn inverse_recovers_argument() {
        for phi in [
            ConvexModulus::Power(2.0),
            ConvexModulus::Power(3.5),
            ConvexModulus::ExpMinusOne(2.0),
            ConvexModulus::Linear(0.3),
        ] {
            for r in [0.0, 1e-3, 0.5, 2.0, 7.0] {
                let v = phi.at(r);
                let back = phi.inverse(v).unwrap();
                assert!(
                    (back - r).abs() <= 1e-12 * (1.0 + r),
                    "{phi:?} r={r} back={back}"
                );
            }
        }
    }

    fn any_modulus() -> impl Strategy<Value = ConvexModulus> {
        prop_oneof![
            (1.0f64..4.0).prop_map(ConvexModulus::Power),
            (0.1f64..5.0).prop_map(ConvexModulus::ExpMinusOne),
            (0.1f64..5.0).prop_map(ConvexModulus::Linear),
        ]
    }

    proptest! {
        #[test]
        fn midpoint_convex_and_superadditive_doubling(
            phi in any_modulus(), r in 0.0f64..10.0, s in 0.0f64..10.0
        ) {
            let mid = phi.at(0.5 * (r + s));
            let chord = 0.5 * (phi.at(r) + phi.at(s));
            prop_assert!(mid <= chord * (1.0 + 1e-12) + 1e-12);
            prop_assert!(phi.at(2.0 * r) >= 2.0 * phi.at(r) * (1.0 - 1e-12));
            if r < s {
                prop_assert!(phi.at(r) < phi.at(s));
            }
        }
    }
}
