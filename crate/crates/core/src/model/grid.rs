use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Uniform grid `t_start = t_0 < ... < t_n = t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// `n_steps = 0` is accepted only as the single-point grid `t_start = t_end`.
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start < 0.0 {
            return Err(LabError::Precondition(format!(
                "grid bounds must be finite with t_start >= 0, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            if t_end != t_start {
                return Err(LabError::Precondition(
                    "a grid with zero steps must have t_end = t_start".into(),
                ));
            }
        } else if !(t_end > t_start) {
            return Err(LabError::Precondition(format!(
                "zero-length grid [{t_start}, {t_end}] with {n_steps} steps"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn dt(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            (self.t_end - self.t_start) / self.n_steps as f64
        }
    }

    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.point(k)).collect()
    }

    /// Every `stride`-th point of this grid.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.n_steps.is_multiple_of(stride) {
            return Err(LabError::Precondition(format!(
                "stride {stride} does not divide {} steps",
                self.n_steps
            )));
        }
        TimeGrid::new(self.t_start, self.t_end, self.n_steps / stride)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_points() {
        let g = TimeGrid::new(0.5, 1.5, 4).unwrap();
        assert_eq!(g.points(), vec![0.5, 0.75, 1.0, 1.25, 1.5]);
        assert_eq!(g.dt(), 0.25);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0.5, 3).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0).is_ok());
    }

    #[test]
    fn coarsening() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        assert_eq!(g.coarsen(4).unwrap().n_steps(), 2);
        assert!(g.coarsen(3).is_err());
    }
}
