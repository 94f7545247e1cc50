//! Extremum search over a finite axis-aligned lattice with local refinement.

use rayon::prelude::*;

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Sense {
    Min,
    Max,
}

impl Sense {
    #[inline]
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Min => a < b,
            Sense::Max => a > b,
        }
    }
}

/// Lattice `{center + j * h}` restricted to the box `|u_i - center_i| <= radii_i`.
#[derive(Clone, Debug)]
pub(crate) struct LatticeSearch {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    /// Coarse spacing per axis.
    pub spacing: Vec<f64>,
    pub refine_tol: f64,
    pub max_rounds: usize,
}

/// Coarse points per axis for a `k`-dimensional scan.
pub(crate) fn default_points_per_axis(k: usize) -> usize {
    match k {
        1 => 2001,
        2 => 201,
        3 => 41,
        4 => 17,
        _ => 9,
    }
}

impl LatticeSearch {
    pub fn new(center: Vec<f64>, radii: Vec<f64>, refine_tol: f64, max_rounds: usize) -> Self {
        let half = (default_points_per_axis(center.len()) - 1) / 2;
        let spacing = radii.iter().map(|r| r / half as f64).collect();
        Self {
            center,
            radii,
            spacing,
            refine_tol,
            max_rounds,
        }
    }

    fn half_counts(&self) -> Vec<usize> {
        self.radii
            .iter()
            .zip(&self.spacing)
            .map(|(r, h)| {
                if *h > 0.0 {
                    (r / h + 1e-9).floor() as usize
                } else {
                    0
                }
            })
            .collect()
    }

    /// Every coarse lattice point, in a fixed order.
    pub fn coarse_points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let half = self.half_counts();
        let total: usize = half.iter().map(|h| 2 * h + 1).product();
        (0..total).map(move |idx| self.decode(idx, &half))
    }

    fn decode(&self, mut idx: usize, half: &[usize]) -> Vec<f64> {
        let mut u = self.center.clone();
        for i in 0..u.len() {
            let side = 2 * half[i] + 1;
            let j = (idx % side) as f64 - half[i] as f64;
            idx /= side;
            u[i] += j * self.spacing[i];
        }
        u
    }

    fn inside(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.center)
            .zip(&self.radii)
            .all(|((a, c), r)| (a - c).abs() <= r * (1.0 + 1e-12))
    }

    /// Best value and point. Ties go to the lowest lattice index, so the
    /// result does not depend on how the scan is split across workers.
    pub fn optimize(
        &self,
        objective: impl Fn(&[f64]) -> f64 + Sync,
        sense: Sense,
    ) -> Result<(f64, Vec<f64>)> {
        let k = self.center.len();
        let half = self.half_counts();
        let total: usize = half.iter().map(|h| 2 * h + 1).product();
        let pick = |a: (f64, usize), b: (f64, usize)| {
            if sense.better(b.0, a.0) || (b.0 == a.0 && b.1 < a.1) || a.0.is_nan() {
                b
            } else {
                a
            }
        };
        let worst = match sense {
            Sense::Min => f64::INFINITY,
            Sense::Max => f64::NEG_INFINITY,
        };
        let (mut best, idx) = (0..total)
            .into_par_iter()
            .map(|i| (objective(&self.decode(i, &half)), i))
            .reduce(|| (worst, usize::MAX), pick);
        if !best.is_finite() {
            return Err(LabError::Evaluation {
                point: format!("{:?}", self.decode(idx.min(total - 1), &half)),
                reason: "objective is not finite on the lattice".into(),
            });
        }
        let mut arg = self.decode(idx, &half);
        let mut h = self.spacing.clone();
        let local = 9usize.pow(k as u32);
        let mut spread = f64::INFINITY;
        let mut still = 0;
        for _ in 0..self.max_rounds {
            h.iter_mut().for_each(|v| *v *= 0.5);
            let (val, u) = self.scan_around(&arg, &h, &objective, worst, &pick, local);
            if sense.better(val, best) {
                best = val;
                arg = u;
                still = 0;
            } else {
                still += 1;
            }
            // Variation over the immediate neighbours bounds how far the
            // lattice value can still move at this resolution. A kink sitting
            // on the lattice leaves the value unchanged while the spread only
            // shrinks linearly, hence the second exit.
            spread = self.neighbour_spread(&arg, &h, best, &objective);
            if spread < self.refine_tol || (still >= 4 && spread < 1e3 * self.refine_tol) {
                return Ok((best, arg));
            }
        }
        Err(LabError::Refinement {
            rounds: self.max_rounds,
            last_change: spread,
        })
    }

    fn offsets(&self, base: &[f64], h: &[f64], side: usize, mut i: usize) -> Vec<f64> {
        let mid = (side / 2) as f64;
        let mut u = base.to_vec();
        for a in 0..u.len() {
            let j = (i % side) as f64 - mid;
            i /= side;
            u[a] += j * h[a];
        }
        u
    }

    fn scan_around(
        &self,
        base: &[f64],
        h: &[f64],
        objective: &(impl Fn(&[f64]) -> f64 + Sync),
        worst: f64,
        pick: &(impl Fn((f64, usize), (f64, usize)) -> (f64, usize) + Sync + Send),
        count: usize,
    ) -> (f64, Vec<f64>) {
        let (val, i) = (0..count)
            .into_par_iter()
            .filter_map(|i| {
                let u = self.offsets(base, h, 9, i);
                self.inside(&u).then(|| (objective(&u), i))
            })
            .reduce(|| (worst, usize::MAX), pick);
        if i == usize::MAX {
            return (worst, base.to_vec());
        }
        (val, self.offsets(base, h, 9, i))
    }

    fn neighbour_spread(
        &self,
        base: &[f64],
        h: &[f64],
        best: f64,
        objective: &(impl Fn(&[f64]) -> f64 + Sync),
    ) -> f64 {
        let count = 3usize.pow(base.len() as u32);
        (0..count)
            .into_par_iter()
            .filter_map(|i| {
                let u = self.offsets(base, h, 3, i);
                self.inside(&u).then(|| (objective(&u) - best).abs())
            })
            .reduce(
                || 0.0,
                |a: f64, b: f64| {
                    if b.is_nan() || a.is_nan() {
                        f64::NAN
                    } else {
                        a.max(b)
                    }
                },
            )
    }
}
