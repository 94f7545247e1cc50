//! Brownian sampling, Euler–Maruyama for the forward state, and discrete
//! first-exit times.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{SdeCoefficients, TimeGrid};
use crate::rng::{CounterNormal, PRIOR_STEP};

#[derive(Clone, Debug, PartialEq)]
struct StateBlock {
    dim_x: usize,
    values: Vec<f64>,
}

/// Brownian (and optionally state) paths on a shared grid, path-major:
/// `brownian[(p * (n_steps + 1) + k) * d + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    n_paths: usize,
    dim_w: usize,
    seed: u64,
    brownian: Vec<f64>,
    state: Option<StateBlock>,
}

impl PathBundle {
    /// Assemble a bundle from raw path-major buffers.
    pub fn from_parts(
        grid: TimeGrid,
        dim_w: usize,
        seed: u64,
        brownian: Vec<f64>,
        state: Option<(usize, Vec<f64>)>,
    ) -> Result<Self> {
        let cols = grid.n_steps() + 1;
        if dim_w == 0 || !brownian.len().is_multiple_of(cols * dim_w) || brownian.is_empty() {
            return Err(LabError::Dimension {
                expected: cols * dim_w.max(1),
                got: brownian.len(),
                context: "brownian buffer length per path",
            });
        }
        let n_paths = brownian.len() / (cols * dim_w);
        let state = match state {
            Some((dim_x, values)) => {
                if dim_x == 0 || values.len() != n_paths * cols * dim_x {
                    return Err(LabError::Dimension {
                        expected: n_paths * cols * dim_x,
                        got: values.len(),
                        context: "state buffer length",
                    });
                }
                Some(StateBlock { dim_x, values })
            }
            None => None,
        };
        Ok(Self {
            grid,
            n_paths,
            dim_w,
            seed,
            brownian,
            state,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn dim_x(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.dim_x)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn has_state(&self) -> bool {
        self.state.is_some()
    }

    #[inline]
    fn cols(&self) -> usize {
        self.grid.n_steps() + 1
    }

    #[inline]
    pub fn brownian_at(&self, p: usize, k: usize) -> &[f64] {
        let d = self.dim_w;
        let off = (p * self.cols() + k) * d;
        &self.brownian[off..off + d]
    }

    /// `B_{k+1} - B_k` for path `p`, written into `out`.
    #[inline]
    pub fn increment_into(&self, p: usize, k: usize, out: &mut [f64]) {
        let d = self.dim_w;
        let off = (p * self.cols() + k) * d;
        for j in 0..d {
            out[j] = self.brownian[off + d + j] - self.brownian[off + j];
        }
    }

    /// State at grid index `k`; panics when the bundle carries no state.
    #[inline]
    pub fn state_at(&self, p: usize, k: usize) -> &[f64] {
        let s = self.state.as_ref().expect("bundle has no state paths");
        let off = (p * self.cols() + k) * s.dim_x;
        &s.values[off..off + s.dim_x]
    }

    pub fn brownian_values(&self) -> &[f64] {
        &self.brownian
    }

    pub fn state_values(&self) -> Option<&[f64]> {
        self.state.as_ref().map(|s| s.values.as_slice())
    }

    /// Keep every `stride`-th grid point.
    pub fn subsample(&self, stride: usize) -> Result<PathBundle> {
        let grid = self.grid.coarsen(stride)?;
        let cols = self.cols();
        let new_cols = grid.n_steps() + 1;
        let pick = |values: &[f64], dim: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(self.n_paths * new_cols * dim);
            for p in 0..self.n_paths {
                for k in 0..new_cols {
                    let off = (p * cols + k * stride) * dim;
                    out.extend_from_slice(&values[off..off + dim]);
                }
            }
            out
        };
        Ok(PathBundle {
            grid,
            n_paths: self.n_paths,
            dim_w: self.dim_w,
            seed: self.seed,
            brownian: pick(&self.brownian, self.dim_w),
            state: self.state.as_ref().map(|s| StateBlock {
                dim_x: s.dim_x,
                values: pick(&s.values, s.dim_x),
            }),
        })
    }
}

/// Fresh Brownian paths starting at 0 on `grid`.
pub fn simulate_brownian(
    grid: &TimeGrid,
    n_paths: usize,
    d: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_brownian_with_prior(grid, n_paths, d, seed, 0.0)
}

/// Brownian paths whose value at `t_start` is drawn from `N(0, prior_variance I)`.
///
/// With `prior_variance = t_start` this is a Brownian motion started at time 0
/// observed on the grid.
pub fn simulate_brownian_with_prior(
    grid: &TimeGrid,
    n_paths: usize,
    d: usize,
    seed: u64,
    prior_variance: f64,
) -> Result<PathBundle> {
    if n_paths == 0 || d == 0 {
        return Err(LabError::Precondition(
            "n_paths and d must be at least 1".into(),
        ));
    }
    if !(prior_variance >= 0.0) {
        return Err(LabError::Precondition(format!(
            "prior variance {prior_variance} < 0"
        )));
    }
    let cols = grid.n_steps() + 1;
    let sqrt_dt = grid.dt().sqrt();
    let prior_sd = prior_variance.sqrt();
    let rng = CounterNormal::new(seed);
    let mut brownian = vec![0.0; n_paths * cols * d];
    brownian
        .par_chunks_mut(cols * d)
        .enumerate()
        .for_each(|(p, path)| {
            let mut noise = vec![0.0; d];
            if prior_sd > 0.0 {
                rng.fill(p as u64, PRIOR_STEP, &mut noise);
                for j in 0..d {
                    path[j] = prior_sd * noise[j];
                }
            }
            for k in 0..grid.n_steps() {
                rng.fill(p as u64, k as u32, &mut noise);
                let (head, tail) = path.split_at_mut((k + 1) * d);
                let prev = &head[k * d..];
                for j in 0..d {
                    tail[j] = prev[j] + sqrt_dt * noise[j];
                }
            }
        });
    Ok(PathBundle {
        grid: *grid,
        n_paths,
        dim_w: d,
        seed,
        brownian,
        state: None,
    })
}

/// Euler–Maruyama solution of the forward SDE started from `x` at time `t`:
/// `X_{k+1} = X_k + b(t_k, X_k) dt + sigma(t_k, X_k) dB_k`.
pub fn euler_maruyama(
    coeffs: &SdeCoefficients,
    t: f64,
    x: &[f64],
    mut paths: PathBundle,
) -> Result<PathBundle> {
    if (paths.grid.t_start() - t).abs() > 1e-12 * (1.0 + t.abs()) {
        return Err(LabError::Precondition(format!(
            "grid starts at {} but the SDE starts at {t}",
            paths.grid.t_start()
        )));
    }
    if coeffs.dim_w != paths.dim_w {
        return Err(LabError::Dimension {
            expected: paths.dim_w,
            got: coeffs.dim_w,
            context: "diffusion columns vs Brownian dimension",
        });
    }
    if x.len() != coeffs.dim_x {
        return Err(LabError::Dimension {
            expected: coeffs.dim_x,
            got: x.len(),
            context: "initial state",
        });
    }
    let m = coeffs.dim_x;
    let d = paths.dim_w;
    let cols = paths.cols();
    let grid = paths.grid;
    let dt = grid.dt();
    let mut values = vec![0.0; paths.n_paths * cols * m];
    let brownian = &paths.brownian;
    values
        .par_chunks_mut(cols * m)
        .enumerate()
        .for_each(|(p, out)| {
            let mut b = vec![0.0; m];
            let mut s = vec![0.0; m * d];
            out[..m].copy_from_slice(x);
            let bpath = &brownian[p * cols * d..(p + 1) * cols * d];
            for k in 0..grid.n_steps() {
                let tk = grid.point(k);
                let (head, tail) = out.split_at_mut((k + 1) * m);
                let cur = &head[k * m..];
                coeffs.drift_into(tk, cur, &mut b);
                coeffs.diffusion_into(tk, cur, &mut s);
                for i in 0..m {
                    let mut v = cur[i] + b[i] * dt;
                    for j in 0..d {
                        v += s[i * d + j] * (bpath[(k + 1) * d + j] - bpath[k * d + j]);
                    }
                    tail[i] = v;
                }
            }
        });
    paths.state = Some(StateBlock { dim_x: m, values });
    Ok(paths)
}

/// Discrete exit times from the ball of radius `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimeField {
    pub tau_index: Vec<usize>,
    pub tau_value: Vec<f64>,
    pub threshold: f64,
    /// Grid index of the horizon cap.
    pub cap_index: usize,
}

impl StoppingTimeField {
    /// No stopping: every path runs to `cap_index`.
    pub fn unstopped(n_paths: usize, grid: &TimeGrid) -> Self {
        Self {
            tau_index: vec![grid.n_steps(); n_paths],
            tau_value: vec![grid.len(); n_paths],
            threshold: f64::INFINITY,
            cap_index: grid.n_steps(),
        }
    }

    pub fn fraction_stopped_early(&self) -> f64 {
        let early = self
            .tau_index
            .iter()
            .filter(|&&k| k < self.cap_index)
            .count();
        early as f64 / self.tau_index.len().max(1) as f64
    }
}

/// First grid index with `|X| > threshold`, capped at the horizon. The
/// continuous-time infimum is replaced by grid monitoring, which biases the
/// exit time upward by `O(sqrt(dt))` in probability.
pub fn hitting_time(
    paths: &PathBundle,
    x: &[f64],
    threshold: f64,
    horizon: f64,
) -> Result<StoppingTimeField> {
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(threshold > x_norm) {
        return Err(LabError::Precondition(format!(
            "threshold C0 = {threshold} must exceed |x| = {x_norm}"
        )));
    }
    if !(horizon > 0.0) {
        return Err(LabError::Precondition(format!(
            "horizon {horizon} must be positive"
        )));
    }
    if !paths.has_state() {
        return Err(LabError::Precondition(
            "hitting_time needs state paths".into(),
        ));
    }
    let grid = paths.grid;
    let n = grid.n_steps();
    let cap_index = if grid.dt() == 0.0 {
        0
    } else {
        ((horizon / grid.dt()) * (1.0 + 1e-12))
            .floor()
            .min(n as f64) as usize
    };
    let thr2 = threshold * threshold;
    let tau_index: Vec<usize> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            (1..=cap_index)
                .find(|&k| paths.state_at(p, k).iter().map(|v| v * v).sum::<f64>() > thr2)
                .unwrap_or(cap_index)
        })
        .collect();
    let tau_value = tau_index
        .iter()
        .map(|&k| grid.point(k) - grid.t_start())
        .collect();
    Ok(StoppingTimeField {
        tau_index,
        tau_value,
        threshold,
        cap_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_gives_constant_paths() {
        let g = TimeGrid::new(0.0, 0.0, 0).unwrap();
        let b = simulate_brownian(&g, 5, 2, 1).unwrap();
        assert!(b.brownian_values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let a = simulate_brownian(&g, 100, 3, 9).unwrap();
        let b = simulate_brownian(&g, 100, 3, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_brownian(&g, 100, 3, 10).unwrap();
        assert_ne!(a.brownian_values(), c.brownian_values());
    }

    #[test]
    fn path_prefix_does_not_depend_on_bundle_size() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let small = simulate_brownian(&g, 10, 2, 3).unwrap();
        let large = simulate_brownian(&g, 1000, 2, 3).unwrap();
        assert_eq!(
            small.brownian_values(),
            &large.brownian_values()[..small.brownian_values().len()]
        );
    }

    #[test]
    fn frozen_dynamics_stay_at_start() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let b = simulate_brownian(&g, 20, 1, 2).unwrap();
        let c = SdeCoefficients::frozen(2, 1).unwrap();
        let out = euler_maruyama(&c, 0.0, &[1.5, -0.5], b).unwrap();
        assert!(out
            .state_values()
            .unwrap()
            .chunks(2)
            .all(|x| x == [1.5, -0.5]));
    }

    #[test]
    fn additive_noise_reproduces_brownian_path() {
        let g = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let b = simulate_brownian(&g, 50, 1, 4).unwrap();
        let out = euler_maruyama(&SdeCoefficients::brownian(1), 0.0, &[0.0], b).unwrap();
        for p in 0..50 {
            for k in 0..=32 {
                assert!((out.state_at(p, k)[0] - out.brownian_at(p, k)[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_noise_is_the_explicit_euler_update() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let b = simulate_brownian(&g, 3, 1, 4).unwrap();
        let c = SdeCoefficients::geometric(0.7, 0.0).unwrap();
        let out = euler_maruyama(&c, 0.0, &[2.0], b).unwrap();
        let mut x = 2.0;
        for k in 0..10 {
            x += 0.7 * x * 0.1;
            assert_eq!(out.state_at(1, k + 1)[0], x);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let b = simulate_brownian(&g, 3, 2, 4).unwrap();
        assert!(matches!(
            euler_maruyama(&SdeCoefficients::brownian(1), 0.0, &[0.0], b),
            Err(LabError::Dimension { .. })
        ));
    }

    #[test]
    fn unreachable_threshold_gives_horizon() {
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let b = simulate_brownian(&g, 50, 1, 4).unwrap();
        let x = euler_maruyama(&SdeCoefficients::brownian(1), 0.0, &[0.0], b).unwrap();
        let tau = hitting_time(&x, &[0.0], 1e9, 1.0).unwrap();
        assert!(tau.tau_index.iter().all(|&k| k == 20));
        assert!(tau.tau_value.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn hand_built_crossing_at_step_seven() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let state: Vec<f64> = (0..=10)
            .map(|k| if k < 7 { 0.1 * k as f64 } else { 2.0 })
            .collect();
        let bundle = PathBundle::from_parts(g, 1, 0, vec![0.0; 11], Some((1, state))).unwrap();
        let tau = hitting_time(&bundle, &[0.0], 1.0, 1.0).unwrap();
        assert_eq!(tau.tau_index, vec![7]);
        assert!((tau.tau_value[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn threshold_must_exceed_start() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let bundle =
            PathBundle::from_parts(g, 1, 0, vec![0.0; 11], Some((1, vec![1.0; 11]))).unwrap();
        assert!(matches!(
            hitting_time(&bundle, &[1.0], 1.0, 1.0),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn horizon_caps_before_grid_end() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let b = simulate_brownian(&g, 10, 1, 4).unwrap();
        let x = euler_maruyama(&SdeCoefficients::brownian(1), 0.0, &[0.0], b).unwrap();
        let tau = hitting_time(&x, &[0.0], 1e9, 0.5).unwrap();
        assert!(tau.tau_index.iter().all(|&k| k == 5));
    }
}
