//! Backward least-squares Monte Carlo solver for
//! `Y_t = xi + int_t^T g(s, Y_s, Z_s) ds - int_t^T Z_s dB_s`, optionally on a
//! stochastic interval ending at a stopping time.

pub mod bounds;
pub mod oracle;
pub mod regression;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{GeneratorSpec, TimeGrid};
use crate::numeric::{mean_estimate, mean_sd, Estimate};
use crate::sde::{PathBundle, StoppingTimeField};

pub use bounds::{
    check_bound_global, check_bound_small_horizon, small_horizon_sweep, BoundReport, BoundStatus,
    SmallHorizonSweep,
};
pub use oracle::{oracle_cole_hopf, oracle_cole_hopf_cells, oracle_linear};
pub use regression::{fit_conditional, Basis, ConditionalFit};

/// Which per-path quantities at step `k` the conditional expectations use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressors {
    State,
    Brownian,
    StateAndBrownian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `Y_k = E_k[Y_{k+1}] + g(t_k, E_k[Y_{k+1}], Z_k) dt`.
    ExplicitBackwardEuler,
    /// `Y_k = E_k[Y_{k+1}] + g(t_k, Y_k, Z_k) dt`, solved by Picard iteration.
    ImplicitY,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub basis: Basis,
    pub regressors: Regressors,
    pub picard_max: usize,
    pub picard_tol: f64,
    pub z_clip: f64,
    pub scheme: Scheme,
}

impl SolverConfig {
    /// Cubic polynomials in the state, implicit scheme, `z_clip = 10 / gamma`.
    pub fn for_generator(gen: &GeneratorSpec) -> Self {
        Self {
            basis: Basis::Polynomial { degree: 3 },
            regressors: Regressors::State,
            picard_max: 100,
            picard_tol: 1e-12,
            z_clip: 10.0 / gen.gamma,
            scheme: Scheme::ImplicitY,
        }
    }

    pub fn with_basis(mut self, basis: Basis) -> Self {
        self.basis = basis;
        self
    }

    pub fn with_regressors(mut self, regressors: Regressors) -> Self {
        self.regressors = regressors;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) {
            return Err(LabError::Precondition(format!(
                "picard_tol must be > 0, got {}",
                self.picard_tol
            )));
        }
        if !(self.z_clip > 0.0 && self.z_clip.is_finite()) {
            return Err(LabError::Precondition(format!(
                "z_clip must be finite and > 0, got {}",
                self.z_clip
            )));
        }
        if self.picard_max == 0 {
            return Err(LabError::Precondition(
                "picard_max must be at least 1".into(),
            ));
        }
        match self.basis {
            Basis::PiecewiseConstant { bins: 0 } => Err(LabError::Precondition(
                "piecewise basis needs at least one bin".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Largest number of Picard sweeps over all steps.
    pub picard_iterations: usize,
    /// Largest final Picard residual over all steps.
    pub picard_residual: f64,
    /// Largest normal-equation condition number over all steps.
    pub regression_condition: f64,
    /// Fraction of active path-steps where `|Z| > z_clip`.
    pub clipped_fraction: f64,
    /// Picard residuals per step (index `k`), one entry per sweep.
    pub picard_history: Vec<Vec<f64>>,
    /// Floating-point floor added to the standard error of the initial value.
    pub rounding_floor: f64,
}

impl SolverDiagnostics {
    /// Whether every Picard residual sequence is non-increasing from the
    /// third sweep on. Residuals below `floor` count as converged.
    pub fn picard_monotone(&self, floor: f64) -> bool {
        self.picard_history
            .iter()
            .all(|h| h.windows(2).skip(1).all(|w| w[1] <= w[0] || w[1] <= floor))
    }
}

/// Discrete `(Y, Z)` on the paths of a bundle. `y` is row-major
/// `n_paths x (n_steps + 1)`, `z` is `n_paths x n_steps x d`.
#[derive(Clone, Debug)]
pub struct BsdeSolution {
    grid: TimeGrid,
    n_paths: usize,
    dim_z: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    terminal_index: Vec<usize>,
    terminal: Vec<f64>,
    control_variate: Vec<f64>,
    initial: Estimate,
    initial_regression: Estimate,
    initial_conditional: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl BsdeSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim_z(&self) -> usize {
        self.dim_z
    }

    #[inline]
    pub fn y_at(&self, p: usize, k: usize) -> f64 {
        self.y[p * (self.grid.n_steps() + 1) + k]
    }

    #[inline]
    pub fn z_at(&self, p: usize, k: usize) -> &[f64] {
        let off = (p * self.grid.n_steps() + k) * self.dim_z;
        &self.z[off..off + self.dim_z]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn terminal_index(&self) -> &[usize] {
        &self.terminal_index
    }

    /// Initial value from the martingale control variate
    /// `xi + sum_k g_k dt - sum_k Z_k dB_k`, averaged over paths.
    pub fn initial_estimate(&self) -> Estimate {
        self.initial
    }

    /// Path average of the regressed `Y` at the first grid point, with the
    /// standard error of `xi + sum_k g_k dt`.
    pub fn regression_estimate(&self) -> Estimate {
        self.initial_regression
    }

    /// Per-path conditional initial value given the regressors at the first
    /// grid point (all equal when those regressors are deterministic).
    pub fn initial_conditional(&self) -> &[f64] {
        &self.initial_conditional
    }

    pub fn control_variate(&self) -> &[f64] {
        &self.control_variate
    }

    /// Largest `|Y|` over all paths and grid points (empirical essential sup).
    pub fn sup_abs_y(&self) -> f64 {
        self.y.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Path average of `sum_{k < tau} |Z_k|^2 dt`.
    pub fn z_energy(&self) -> f64 {
        self.z_energy_estimate().value
    }

    /// [`Self::z_energy`] with its standard error over paths.
    pub fn z_energy_estimate(&self) -> Estimate {
        let dt = self.grid.dt();
        let ns = self.grid.n_steps();
        let d = self.dim_z;
        let per_path: Vec<f64> = (0..self.n_paths)
            .map(|p| {
                let z = &self.z[p * ns * d..(p + 1) * ns * d];
                z.iter().map(|v| v * v).sum::<f64>() * dt
            })
            .collect();
        mean_estimate(&per_path)
    }

    pub fn diagnostics_row(&self, preset: &str) -> DiagnosticsRow {
        DiagnosticsRow {
            preset: preset.to_string(),
            n_paths: self.n_paths,
            dt: self.grid.dt(),
            y0: self.initial.value,
            std_error: self.initial.std_error,
            picard_iterations: self.diagnostics.picard_iterations,
            clipped_fraction: self.diagnostics.clipped_fraction,
        }
    }
}

/// One row of the solve summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub preset: String,
    pub n_paths: usize,
    pub dt: f64,
    pub y0: f64,
    pub std_error: f64,
    pub picard_iterations: usize,
    pub clipped_fraction: f64,
}

fn regressor_width(paths: &PathBundle, regressors: Regressors) -> Result<usize> {
    let need_state = || {
        paths.dim_x().ok_or_else(|| {
            LabError::Precondition("state regressors need simulated state paths".into())
        })
    };
    Ok(match regressors {
        Regressors::State => need_state()?,
        Regressors::Brownian => paths.dim_w(),
        Regressors::StateAndBrownian => need_state()? + paths.dim_w(),
    })
}

fn gather_features(
    paths: &PathBundle,
    regressors: Regressors,
    k: usize,
    active: &[usize],
    q: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(active.len() * q);
    for &p in active {
        match regressors {
            Regressors::State => out.extend_from_slice(paths.state_at(p, k)),
            Regressors::Brownian => out.extend_from_slice(paths.brownian_at(p, k)),
            Regressors::StateAndBrownian => {
                out.extend_from_slice(paths.state_at(p, k));
                out.extend_from_slice(paths.brownian_at(p, k));
            }
        }
    }
    out
}

/// Solve the BSDE with per-path terminal values on the paths of `paths`.
///
/// Paths with `tau_index = j` carry `Y = terminal` and `Z = 0` from `j` on.
pub fn solve_bsde(
    gen: &GeneratorSpec,
    terminal: &[f64],
    paths: &PathBundle,
    stop: Option<&StoppingTimeField>,
    cfg: &SolverConfig,
) -> Result<BsdeSolution> {
    cfg.validate()?;
    let grid = *paths.grid();
    let n = paths.n_paths();
    let ns = grid.n_steps();
    let d = paths.dim_w();
    if gen.dim_z != d {
        return Err(LabError::Dimension {
            expected: d,
            got: gen.dim_z,
            context: "generator z dimension vs Brownian dimension",
        });
    }
    if terminal.len() != n {
        return Err(LabError::Dimension {
            expected: n,
            got: terminal.len(),
            context: "terminal values per path",
        });
    }
    if let Some(v) = terminal.iter().find(|v| !v.is_finite()) {
        return Err(LabError::Precondition(format!(
            "terminal value {v} is not finite"
        )));
    }
    let tau: Vec<usize> = match stop {
        Some(s) => {
            if s.tau_index.len() != n
                || s.cap_index > ns
                || s.tau_index.iter().any(|&k| k > s.cap_index)
            {
                return Err(LabError::Precondition(
                    "stopping field does not match the path grid".into(),
                ));
            }
            s.tau_index.clone()
        }
        None => vec![ns; n],
    };
    let q = regressor_width(paths, cfg.regressors)?;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    let cols = ns + 1;
    let mut y = vec![0.0; n * cols];
    for p in 0..n {
        for k in tau[p]..=ns {
            y[p * cols + k] = terminal[p];
        }
    }
    let mut z = vec![0.0; n * ns * d];
    let mut cv = terminal.to_vec();
    let mut drift_sum = terminal.to_vec();
    let mut scale: Vec<f64> = terminal.iter().map(|v| v.abs()).collect();

    let mut history = vec![Vec::new(); ns];
    let mut max_iter = 0usize;
    let mut max_res = 0.0f64;
    let mut max_cond = 1.0f64;
    let mut clipped = 0usize;
    let mut active_steps = 0usize;

    for k in (0..ns).rev() {
        let active: Vec<usize> = (0..n).filter(|&p| tau[p] > k).collect();
        if active.is_empty() {
            continue;
        }
        let na = active.len();
        let t = grid.point(k);
        let target: Vec<f64> = active.iter().map(|&p| y[p * cols + k + 1]).collect();
        let features = gather_features(paths, cfg.regressors, k, &active, q);
        let mut incr = vec![0.0; na * d];
        for (i, &p) in active.iter().enumerate() {
            paths.increment_into(p, k, &mut incr[i * d..(i + 1) * d]);
        }
        let noise: Vec<f64> = if sqrt_dt > 0.0 {
            incr.iter().map(|v| v / sqrt_dt).collect()
        } else {
            vec![0.0; na * d]
        };
        let fit = fit_conditional(&cfg.basis, &features, q, &noise, d, &target, k)?;
        max_cond = max_cond.max(fit.condition);
        let zk: Vec<f64> = if sqrt_dt > 0.0 {
            fit.noise_coef.iter().map(|c| c / sqrt_dt).collect()
        } else {
            vec![0.0; na * d]
        };
        let mut zc = zk.clone();
        for i in 0..na {
            let row = &mut zc[i * d..(i + 1) * d];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cfg.z_clip {
                clipped += 1;
                row.iter_mut().for_each(|v| *v *= cfg.z_clip / norm);
            }
        }
        active_steps += na;
        let alpha: Vec<f64> = active
            .iter()
            .map(|&p| gen.alpha.value(t, paths.brownian_at(p, k)))
            .collect();
        let m = &fit.mean;
        let update = |yk: &[f64]| -> Vec<f64> {
            (0..na)
                .into_par_iter()
                .map(|i| {
                    m[i] + gen.eval_with_alpha(t, yk[i], &zc[i * d..(i + 1) * d], alpha[i]) * dt
                })
                .collect()
        };
        let yk = match cfg.scheme {
            Scheme::ExplicitBackwardEuler => {
                let out = update(m);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(LabError::PicardDivergence {
                        step: k,
                        residuals: vec![f64::INFINITY],
                    });
                }
                history[k].push(0.0);
                out
            }
            Scheme::ImplicitY => {
                let mut cur = m.clone();
                let mut res_hist = Vec::new();
                loop {
                    let next = update(&cur);
                    let mut res = 0.0f64;
                    let mut finite = true;
                    for (a, b) in next.iter().zip(&cur) {
                        let r = (a - b).abs();
                        finite &= r.is_finite();
                        res = res.max(r);
                    }
                    if !finite {
                        res_hist.push(f64::INFINITY);
                        return Err(LabError::PicardDivergence {
                            step: k,
                            residuals: res_hist,
                        });
                    }
                    res_hist.push(res);
                    cur = next;
                    if res <= cfg.picard_tol {
                        break;
                    }
                    if res_hist.len() >= cfg.picard_max {
                        return Err(LabError::PicardDivergence {
                            step: k,
                            residuals: res_hist,
                        });
                    }
                }
                history[k] = res_hist;
                cur
            }
        };
        max_iter = max_iter.max(history[k].len());
        max_res = max_res.max(*history[k].last().unwrap_or(&0.0));
        for (i, &p) in active.iter().enumerate() {
            y[p * cols + k] = yk[i];
            let g_dt = yk[i] - m[i];
            let mut z_db = 0.0;
            for j in 0..d {
                z[(p * ns + k) * d + j] = zk[i * d + j];
                z_db += zk[i * d + j] * incr[i * d + j];
            }
            cv[p] += g_dt - z_db;
            drift_sum[p] += g_dt;
            scale[p] += g_dt.abs() + z_db.abs();
        }
    }

    let (cv_mean, cv_sd) = mean_sd(&cv);
    let mean_scale = mean_sd(&scale).0;
    let rounding_floor = 4.0 * f64::EPSILON * (ns as f64 + 1.0) * mean_scale;
    let sqrt_n = (n as f64).sqrt();
    let initial = Estimate::new(
        cv_mean,
        ((cv_sd / sqrt_n).powi(2) + rounding_floor.powi(2)).sqrt(),
    );
    let y0: Vec<f64> = (0..n).map(|p| y[p * cols]).collect();
    let (y0_mean, _) = mean_sd(&y0);
    let (_, drift_sd) = mean_sd(&drift_sum);
    let initial_regression = Estimate::new(
        y0_mean,
        ((drift_sd / sqrt_n).powi(2) + rounding_floor.powi(2)).sqrt(),
    );

    let all: Vec<usize> = (0..n).collect();
    let features0 = gather_features(paths, cfg.regressors, 0, &all, q);
    let initial_conditional = fit_conditional(&cfg.basis, &features0, q, &[], 0, &cv, 0)?.mean;

    Ok(BsdeSolution {
        grid,
        n_paths: n,
        dim_z: d,
        y,
        z,
        terminal_index: tau,
        terminal: terminal.to_vec(),
        control_variate: cv,
        initial,
        initial_regression,
        initial_conditional,
        diagnostics: SolverDiagnostics {
            picard_iterations: max_iter,
            picard_residual: max_res,
            regression_condition: max_cond,
            clipped_fraction: if active_steps == 0 {
                0.0
            } else {
                clipped as f64 / active_steps as f64
            },
            picard_history: history,
            rounding_floor,
        },
    })
}
