//! Inf-convolution approximants `f_n(x) = inf_u f(u) + (n/2) K phi(2|u - x|)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lattice::{LatticeSearch, Sense};
use crate::error::{LabError, Result};
use crate::model::ConvexModulus;

pub type ScalarField = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// A function with convex growth `|f(x)| <= a + K phi(|x|)` and the search
/// settings used to approximate its inf-convolutions.
#[derive(Clone)]
pub struct InfConvSpec {
    pub name: String,
    pub f: Arc<ScalarField>,
    pub dim: usize,
    pub a: f64,
    pub k: f64,
    pub phi: ConvexModulus,
    /// Lattice radius around `x`; derived from the growth constants when absent.
    pub search_radius: Option<f64>,
    /// Coarse lattice spacing; derived from the radius when absent.
    pub search_spacing: Option<f64>,
    pub refine_tol: f64,
    pub max_rounds: usize,
    /// Allowed excess in the sampled growth check.
    pub growth_tol: f64,
}

impl fmt::Debug for InfConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InfConvSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("a", &self.a)
            .field("k", &self.k)
            .field("phi", &self.phi)
            .finish()
    }
}

impl InfConvSpec {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        a: f64,
        k: f64,
        phi: ConvexModulus,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::Spec("dimension must be at least 1".into()));
        }
        if !(a >= 0.0 && k >= 0.0) {
            return Err(LabError::Spec(format!(
                "need a >= 0 and K >= 0, got a = {a}, K = {k}"
            )));
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            dim,
            a,
            k,
            phi,
            search_radius: None,
            search_spacing: None,
            refine_tol: 1e-8,
            max_rounds: 20,
            growth_tol: 1e-9,
        })
    }

    /// `f(x) = x^2` (per coordinate sum) with `phi(r) = r^2`, `K = 1`, `a = 0`.
    pub fn square(dim: usize) -> Self {
        Self::new("square", dim, 0.0, 1.0, ConvexModulus::Power(2.0), |x| {
            x.iter().map(|v| v * v).sum()
        })
        .expect("valid preset")
    }

    /// `f(x) = |x|` with `phi(r) = r`, `K = 1`, `a = 0`.
    pub fn abs(dim: usize) -> Self {
        Self::new("abs", dim, 0.0, 1.0, ConvexModulus::Linear(1.0), norm).expect("valid preset")
    }

    /// `f = c` with `a = |c|`, `K = 1`, `phi(r) = r`.
    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(
            "constant",
            dim,
            c.abs(),
            1.0,
            ConvexModulus::Linear(1.0),
            move |_| c,
        )
        .expect("valid preset")
    }

    pub fn by_name(name: &str, dim: usize, c: f64) -> Result<Self> {
        match name {
            "square" => Ok(Self::square(dim)),
            "abs" => Ok(Self::abs(dim)),
            "constant" => Ok(Self::constant(dim, c)),
            other => Err(LabError::Config(format!(
                "unknown inf-convolution preset '{other}'"
            ))),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// Bound `a + (1/2) K phi(2|x|)` on `|f_n(x)|`.
    pub fn envelope(&self, x: &[f64]) -> f64 {
        self.a + 0.5 * self.k * self.phi.at(2.0 * norm(x))
    }

    /// Default radius: minimizers satisfy
    /// `(n-1)/2 K phi(2|u - x|) <= 2a + K phi(2|x|) + 2/n`.
    pub fn default_radius(&self, n: usize, x: &[f64]) -> Result<f64> {
        let xn = norm(x);
        if n <= 1 || self.k == 0.0 {
            return Ok(xn + 10.0);
        }
        let v = (2.0 * self.a + self.k * self.phi.at(2.0 * xn) + 2.0 / n as f64) * 2.0
            / ((n - 1) as f64 * self.k);
        Ok(xn + self.phi.inverse(v)? / 2.0)
    }

    fn search(&self, n: usize, x: &[f64]) -> Result<LatticeSearch> {
        let r = match self.search_radius {
            Some(r) if r > 0.0 => r,
            Some(r) => {
                return Err(LabError::Spec(format!(
                    "search radius must be > 0, got {r}"
                )))
            }
            None => self.default_radius(n, x)?,
        };
        let mut s = LatticeSearch::new(
            x.to_vec(),
            vec![r; self.dim],
            self.refine_tol,
            self.max_rounds,
        );
        if let Some(h) = self.search_spacing {
            if !(h > 0.0) {
                return Err(LabError::Spec(format!(
                    "search spacing must be > 0, got {h}"
                )));
            }
            s.spacing = vec![h.min(r); self.dim];
        }
        Ok(s)
    }

    /// Check `|f(u)| <= a + K phi(|u|)` on every coarse lattice point.
    fn check_growth(&self, s: &LatticeSearch) -> Result<()> {
        for u in s.coarse_points() {
            let fu = self.eval(&u);
            let cap = self.a + self.k * self.phi.at(norm(&u));
            if !(fu.abs() <= cap + self.growth_tol * (1.0 + cap)) {
                return Err(LabError::Spec(format!(
                    "growth check fails at u = {u:?}: |f(u)| = {} > a + K phi(|u|) = {cap}",
                    fu.abs()
                )));
            }
        }
        Ok(())
    }
}

/// `f_n(x)` as the minimum over the search lattice, refined around the argmin.
pub fn inf_convolution(spec: &InfConvSpec, n: usize, x: &[f64]) -> Result<f64> {
    if n == 0 {
        return Err(LabError::Precondition("n must be at least 1".into()));
    }
    if x.len() != spec.dim {
        return Err(LabError::Dimension {
            expected: spec.dim,
            got: x.len(),
            context: "inf-convolution point",
        });
    }
    let s = spec.search(n, x)?;
    spec.check_growth(&s)?;
    let scale = 0.5 * n as f64 * spec.k;
    let (v, _) = s.optimize(
        |u| {
            let d: f64 = u
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            spec.eval(u) + scale * spec.phi.at(2.0 * d)
        },
        Sense::Min,
    )?;
    Ok(v)
}

/// One grid point at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub n: usize,
    pub x: Vec<f64>,
    pub f_n: f64,
    pub f: f64,
    pub envelope: f64,
    /// `|f_n| <= envelope + tol`.
    pub bound_ok: bool,
    /// `f_n >= f_{previous n} - tol` (true for the first `n`).
    pub monotone_ok: bool,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub preset: String,
    pub n_schedule: Vec<usize>,
    pub tol: f64,
    pub rows: Vec<SequenceRow>,
    /// Largest gap `|f_n - f|` over the grid, per `n`.
    pub max_gap: Vec<f64>,
    pub bound_violations: usize,
    pub monotone_violations: usize,
    /// `max_gap` is non-increasing along the schedule.
    pub gap_shrinks: bool,
    pub witness: Option<String>,
}

impl SequenceReport {
    pub fn passed(&self) -> bool {
        self.bound_violations == 0 && self.monotone_violations == 0 && self.gap_shrinks
    }
}

/// Check the bound, monotonicity in `n` and convergence of `f_n` on a grid.
pub fn approx_sequence_check(
    spec: &InfConvSpec,
    x_grid: &[Vec<f64>],
    n_schedule: &[usize],
) -> Result<SequenceReport> {
    if n_schedule.is_empty() || n_schedule.windows(2).any(|w| w[1] <= w[0]) || n_schedule[0] == 0 {
        return Err(LabError::Precondition(
            "n schedule must be positive and strictly increasing".into(),
        ));
    }
    let tol = spec.refine_tol;
    let mut rows = Vec::with_capacity(x_grid.len() * n_schedule.len());
    let mut max_gap = vec![0.0f64; n_schedule.len()];
    let mut prev: Vec<Option<f64>> = vec![None; x_grid.len()];
    let mut bound_violations = 0;
    let mut monotone_violations = 0;
    let mut witness = None;
    for (ni, &n) in n_schedule.iter().enumerate() {
        for (xi, x) in x_grid.iter().enumerate() {
            let f_n = inf_convolution(spec, n, x)?;
            let f = spec.eval(x);
            let envelope = spec.envelope(x);
            let bound_ok = f_n.abs() <= envelope + tol;
            let monotone_ok = prev[xi].is_none_or(|p| f_n >= p - tol);
            if !bound_ok {
                bound_violations += 1;
                witness.get_or_insert_with(|| {
                    format!("bound: n = {n}, x = {x:?}, f_n = {f_n}, envelope = {envelope}")
                });
            }
            if !monotone_ok {
                monotone_violations += 1;
                witness.get_or_insert_with(|| {
                    format!(
                        "monotonicity: n = {n}, x = {x:?}, f_n = {f_n}, previous = {:?}",
                        prev[xi]
                    )
                });
            }
            let gap = (f_n - f).abs();
            max_gap[ni] = max_gap[ni].max(gap);
            prev[xi] = Some(f_n);
            rows.push(SequenceRow {
                n,
                x: x.clone(),
                f_n,
                f,
                envelope,
                bound_ok,
                monotone_ok,
                gap,
            });
        }
    }
    let gap_shrinks = max_gap.windows(2).all(|w| w[1] <= w[0] + tol);
    if !gap_shrinks {
        witness.get_or_insert_with(|| format!("gap grows along the schedule: {max_gap:?}"));
    }
    Ok(SequenceReport {
        preset: spec.name.clone(),
        n_schedule: n_schedule.to_vec(),
        tol,
        rows,
        max_gap,
        bound_violations,
        monotone_violations,
        gap_shrinks,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_fixed() {
        let s = InfConvSpec::constant(1, 2.5);
        for n in [1, 3, 10] {
            assert!((inf_convolution(&s, n, &[0.7]).unwrap() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn abs_is_fixed_for_linear_penalty() {
        let s = InfConvSpec::abs(1);
        for x in [-2.0, -0.3, 0.0, 1.7] {
            assert!((inf_convolution(&s, 1, &[x]).unwrap() - f64::abs(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn square_closed_form() {
        let s = InfConvSpec::square(1);
        // minimize u^2 + 2n (u - x)^2
        for n in [1usize, 2, 7] {
            for x in [1.0f64, -2.5] {
                let want = 2.0 * n as f64 * x * x / (2.0 * n as f64 + 1.0);
                assert!((inf_convolution(&s, n, &[x]).unwrap() - want).abs() < 1e-8);
            }
        }
        assert!((inf_convolution(&s, 1, &[1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn square_in_two_dimensions() {
        let s = InfConvSpec::square(2);
        let x = [1.0, -0.5];
        let want = 4.0 / 5.0 * (1.0 + 0.25);
        assert!((inf_convolution(&s, 2, &x).unwrap() - want).abs() < 1e-7);
    }

    #[test]
    fn growth_violation_is_a_spec_error() {
        let s = InfConvSpec::new("cubic", 1, 0.0, 1.0, ConvexModulus::Power(2.0), |x| {
            x[0].powi(3)
        })
        .unwrap();
        assert!(matches!(
            inf_convolution(&s, 2, &[0.5]),
            Err(LabError::Spec(_))
        ));
    }

    #[test]
    fn sequence_gaps_for_square() {
        let s = InfConvSpec::square(1);
        let grid: Vec<Vec<f64>> = (-4..=4).map(|i| vec![0.5 * i as f64]).collect();
        let rep = approx_sequence_check(&s, &grid, &[1, 2, 4, 8]).unwrap();
        assert!(rep.passed(), "{:?}", rep.witness);
        for row in rep.rows.iter().filter(|r| r.x == vec![1.0]) {
            assert!((row.gap - 1.0 / (2.0 * row.n as f64 + 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn schedule_must_increase() {
        let s = InfConvSpec::square(1);
        assert!(approx_sequence_check(&s, &[vec![0.0]], &[2, 2]).is_err());
    }

    #[test]
    fn lattice_consistency_under_halved_spacing() {
        let mut s = InfConvSpec::square(1);
        let coarse = inf_convolution(&s, 3, &[1.3]).unwrap();
        let r = s.default_radius(3, &[1.3]).unwrap();
        s.search_spacing = Some(r / 2000.0);
        let fine = inf_convolution(&s, 3, &[1.3]).unwrap();
        assert!((coarse - fine).abs() < s.refine_tol);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn approximants_stay_below_f_and_within_envelope(x in -5.0f64..5.0, n in 1usize..64) {
            let s = InfConvSpec::square(1);
            let v = inf_convolution(&s, n, &[x]).unwrap();
            prop_assert!(v <= x * x + 1e-12);
            prop_assert!(v.abs() <= s.envelope(&[x]) + 1e-8);
        }
    }
}
