//! Short-horizon difference quotients `(Y_t - y) / eps` and their limits.
//!
//! For each `eps` the forward state is simulated from `(t, x)` on
//! `[t, t + eps]`, stopped on leaving the ball of radius `C0`, and the BSDE
//! with terminal `y + q.(X_{t+eps^tau} - x)` is solved backward. The quotient
//! is compared against `g(t, y, sigma^T q) + q.b` evaluated at the anchor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{solve_bsde, BsdeSolution, Regressors, SolverConfig};
use crate::error::{LabError, Result};
use crate::model::{GeneratorSpec, SdeCoefficients, TimeGrid};
use crate::numeric::{det_sum, linear_fit, mean_sd};
use crate::report::{Cell, Tabular, Verdict};
use crate::rng::derive_seed;
use crate::sde::{
    euler_maruyama, hitting_time, simulate_brownian_with_prior, PathBundle, StoppingTimeField,
};

const EPS_STREAM: u64 = 0x4551_554f;
const ENERGY_STREAM: u64 = 0x454e_4552;

/// How `|D_eps - target|` is aggregated over paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMode {
    L1,
    /// `(E|D - target|^p)^{min(1/p, 1)}`.
    Lp {
        p: f64,
    },
    /// Largest per-path error.
    Pathwise,
}

/// `(t, x, y, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RepresentationTask {
    pub gen: GeneratorSpec,
    pub coeffs: SdeCoefficients,
    pub anchor: Anchor,
    pub c0: f64,
    /// Terminal time `T`.
    pub horizon: f64,
    pub epsilon_schedule: Vec<f64>,
    pub mode: ErrorMode,
    pub solver: SolverConfig,
    pub n_paths: usize,
    /// Grid steps per `eps`, independent of `eps`.
    pub n_steps: usize,
    pub seed: u64,
}

/// `{2^-2, ..., 2^-7} * len`.
pub fn default_schedule(len: f64) -> Vec<f64> {
    (2..=7).map(|k| len * 0.5f64.powi(k)).collect()
}

impl RepresentationTask {
    /// Task with the default schedule, 64 steps per `eps`, L1 mode and the
    /// generator's default solver. Anchors with `t > 0` regress on the state
    /// and the Brownian value so the quotient is conditional on `B_t`.
    pub fn new(
        gen: GeneratorSpec,
        coeffs: SdeCoefficients,
        anchor: Anchor,
        c0: f64,
        horizon: f64,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        let regressors = if anchor.t > 0.0 {
            Regressors::StateAndBrownian
        } else {
            Regressors::State
        };
        let solver = SolverConfig::for_generator(&gen).with_regressors(regressors);
        let task = Self {
            epsilon_schedule: default_schedule(horizon - anchor.t),
            gen,
            coeffs,
            anchor,
            c0,
            horizon,
            mode: ErrorMode::L1,
            solver,
            n_paths,
            n_steps: 64,
            seed,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Self {
        self.epsilon_schedule = schedule;
        self
    }

    pub fn with_mode(mut self, mode: ErrorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_n_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.anchor;
        if a.x.len() != self.coeffs.dim_x || a.q.len() != self.coeffs.dim_x {
            return Err(LabError::Dimension {
                expected: self.coeffs.dim_x,
                got: if a.x.len() != self.coeffs.dim_x {
                    a.x.len()
                } else {
                    a.q.len()
                },
                context: "anchor x and q vs state dimension",
            });
        }
        if self.gen.dim_z != self.coeffs.dim_w {
            return Err(LabError::Dimension {
                expected: self.coeffs.dim_w,
                got: self.gen.dim_z,
                context: "generator z dimension vs noise dimension",
            });
        }
        let x_norm = norm(&a.x);
        if !(self.c0 > x_norm) {
            return Err(LabError::Precondition(format!(
                "C0 = {} must exceed |x| = {x_norm}",
                self.c0
            )));
        }
        if !(a.t >= 0.0 && a.t < self.horizon) {
            return Err(LabError::Precondition(format!(
                "anchor t = {} outside [0, {})",
                a.t, self.horizon
            )));
        }
        let room = self.horizon - a.t;
        for (i, &e) in self.epsilon_schedule.iter().enumerate() {
            if !(e > 0.0 && e <= room * (1.0 + 1e-12)) {
                return Err(LabError::Precondition(format!(
                    "eps = {e} outside (0, T - t = {room}]"
                )));
            }
            if i > 0 && !(e < self.epsilon_schedule[i - 1]) {
                return Err(LabError::Precondition(
                    "epsilon schedule must be strictly decreasing".into(),
                ));
            }
        }
        if self.n_paths < 2 || self.n_steps == 0 {
            return Err(LabError::Precondition(
                "need n_paths >= 2 and n_steps >= 1".into(),
            ));
        }
        if let ErrorMode::Lp { p } = self.mode {
            if !(p > 0.0 && p.is_finite()) {
                return Err(LabError::Precondition(format!("p must be > 0, got {p}")));
            }
        }
        self.solver.validate()
    }

    /// `g(t, y, sigma^T(t, x) q) + q.b(t, x)` with `alpha` read at `B_t`.
    pub fn target_at(&self, brownian: &[f64]) -> f64 {
        let a = &self.anchor;
        let z = self.coeffs.sigma_transpose_times(a.t, &a.x, &a.q);
        let b = self.coeffs.drift(a.t, &a.x);
        let qb: f64 = a.q.iter().zip(&b).map(|(u, v)| u * v).sum();
        self.gen.eval(a.t, a.y, &z, brownian) + qb
    }

    /// Target at `B_t = 0`.
    pub fn target(&self) -> f64 {
        self.target_at(&vec![0.0; self.coeffs.dim_w])
    }

    pub fn summary(&self) -> TaskSummary {
        TaskSummary {
            generator: self.gen.name().to_string(),
            coefficients: self.coeffs.name().to_string(),
            anchor: self.anchor.clone(),
            c0: self.c0,
            horizon: self.horizon,
            epsilon_schedule: self.epsilon_schedule.clone(),
            mode: self.mode,
            solver: self.solver.clone(),
            n_paths: self.n_paths,
            n_steps: self.n_steps,
            seed: self.seed,
        }
    }
}

/// Serializable description of a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub generator: String,
    pub coefficients: String,
    pub anchor: Anchor,
    pub c0: f64,
    pub horizon: f64,
    pub epsilon_schedule: Vec<f64>,
    pub mode: ErrorMode,
    pub solver: SolverConfig,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpread {
    pub min: f64,
    pub max: f64,
    pub sd: f64,
}

/// One `eps` of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientEstimate {
    pub epsilon: f64,
    /// Monte Carlo estimate of `(Y_t - y) / eps`.
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    /// `|D_eps - target|` aggregated by the task's error mode.
    pub abs_error: f64,
    /// Change of `abs_error` when every per-path quotient moves by one standard error.
    pub error_std_error: f64,
    /// Spread of the per-path conditional quotients.
    pub spread: PathSpread,
    pub stopped_fraction: f64,
    pub clipped_fraction: f64,
    pub picard_iterations: usize,
}

impl QuotientEstimate {
    pub fn reliable(&self) -> bool {
        self.abs_error > 3.0 * self.error_std_error
    }
}

/// Sub-seed of the job for one `eps`.
pub fn epsilon_seed(seed: u64, eps: f64) -> u64 {
    derive_seed(seed, EPS_STREAM, eps.to_bits())
}

/// Forward paths on `[t, t + eps]` and their exit times from the `C0` ball.
#[allow(clippy::too_many_arguments)]
pub(crate) fn stopped_paths(
    coeffs: &SdeCoefficients,
    t: f64,
    x: &[f64],
    c0: f64,
    eps: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<(PathBundle, StoppingTimeField)> {
    let grid = TimeGrid::new(t, t + eps, n_steps)?;
    let brownian = simulate_brownian_with_prior(&grid, n_paths, coeffs.dim_w, seed, t)?;
    let paths = euler_maruyama(coeffs, t, x, brownian)?;
    let stop = hitting_time(&paths, x, c0, eps)?;
    Ok((paths, stop))
}

/// `y + q.(X_{tau} - x)` per path.
pub(crate) fn linear_terminal(
    paths: &PathBundle,
    stop: &StoppingTimeField,
    x: &[f64],
    y: f64,
    q: &[f64],
) -> Vec<f64> {
    (0..paths.n_paths())
        .map(|p| {
            let xt = paths.state_at(p, stop.tau_index[p]);
            y + q
                .iter()
                .zip(xt.iter().zip(x))
                .map(|(qi, (a, b))| qi * (a - b))
                .sum::<f64>()
        })
        .collect()
}

fn error_metric(mode: ErrorMode, errors: &[f64], shift: f64) -> f64 {
    let n = errors.len();
    match mode {
        ErrorMode::Pathwise => errors.iter().fold(0.0, |m, e| m.max(e + shift)),
        ErrorMode::L1 => det_sum(n, |i| errors[i] + shift) / n as f64,
        ErrorMode::Lp { p } => {
            let m = det_sum(n, |i| (errors[i] + shift).powf(p)) / n as f64;
            m.powf((1.0 / p).min(1.0))
        }
    }
}

/// Quotient statistics from a solved short-horizon problem.
pub fn quotient_from_solution(
    task: &RepresentationTask,
    eps: f64,
    paths: &PathBundle,
    stop: &StoppingTimeField,
    sol: &BsdeSolution,
) -> QuotientEstimate {
    let y = task.anchor.y;
    let y0 = sol.initial_estimate();
    let estimate = (y0.value - y) / eps;
    let std_error = y0.std_error / eps;
    let cond = sol.initial_conditional();
    let per_path: Vec<f64> = cond.iter().map(|v| (v - y) / eps).collect();
    let path_dependent = task.gen.alpha.is_path_dependent() && task.anchor.t > 0.0;
    let targets: Vec<f64> = if path_dependent {
        (0..paths.n_paths())
            .map(|p| task.target_at(paths.brownian_at(p, 0)))
            .collect()
    } else {
        vec![task.target(); paths.n_paths()]
    };
    let errors: Vec<f64> = per_path
        .iter()
        .zip(&targets)
        .map(|(d, g)| (d - g).abs())
        .collect();
    let abs_error = error_metric(task.mode, &errors, 0.0);
    let error_std_error = error_metric(task.mode, &errors, std_error) - abs_error;
    let (_, sd) = mean_sd(&per_path);
    let spread = PathSpread {
        min: per_path.iter().cloned().fold(f64::INFINITY, f64::min),
        max: per_path.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        sd,
    };
    QuotientEstimate {
        epsilon: eps,
        estimate,
        std_error,
        target: mean_sd(&targets).0,
        abs_error,
        error_std_error,
        spread,
        stopped_fraction: stop.fraction_stopped_early(),
        clipped_fraction: sol.diagnostics.clipped_fraction,
        picard_iterations: sol.diagnostics.picard_iterations,
    }
}

/// Estimate `(Y_t^{t + eps ^ tau} - y) / eps` for one `eps`.
pub fn difference_quotient(task: &RepresentationTask, eps: f64) -> Result<QuotientEstimate> {
    let a = &task.anchor;
    let room = task.horizon - a.t;
    if !(eps > 0.0 && eps <= room * (1.0 + 1e-12)) {
        return Err(LabError::Precondition(format!(
            "eps = {eps} outside (0, T - t = {room}]"
        )));
    }
    let seed = epsilon_seed(task.seed, eps);
    let (paths, stop) = stopped_paths(
        &task.coeffs,
        a.t,
        &a.x,
        task.c0,
        eps,
        task.n_paths,
        task.n_steps,
        seed,
    )?;
    let terminal = linear_terminal(&paths, &stop, &a.x, a.y, &a.q);
    let sol = solve_bsde(&task.gen, &terminal, &paths, Some(&stop), &task.solver)?;
    Ok(quotient_from_solution(task, eps, &paths, &stop, &sol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub task: TaskSummary,
    pub target: f64,
    pub tolerance: f64,
    /// Ordered by decreasing `eps`.
    pub rows: Vec<QuotientEstimate>,
    /// Indices of rows whose error exceeds three standard errors.
    pub reliable_points: Vec<usize>,
    pub fitted_rate: Option<f64>,
    pub fitted_limit: f64,
    pub limit_std_error: f64,
    pub extrapolated: bool,
    pub noise_dominated: bool,
    pub monotone: bool,
    pub verdict: Verdict,
}

impl Tabular for ConvergenceReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "epsilon",
            "estimate",
            "std_error",
            "abs_error",
            "error_std_error",
            "target",
            "stopped_fraction",
            "picard_iterations",
        ]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.epsilon.into(),
                    r.estimate.into(),
                    r.std_error.into(),
                    r.abs_error.into(),
                    r.error_std_error.into(),
                    r.target.into(),
                    r.stopped_fraction.into(),
                    r.picard_iterations.into(),
                ]
            })
            .collect()
    }
}

/// Fit, extrapolate and judge a finished sweep.
pub fn assemble_report(task: TaskSummary, rows: Vec<QuotientEstimate>) -> ConvergenceReport {
    let n = rows.len();
    let target = rows.iter().map(|r| r.target).sum::<f64>() / n.max(1) as f64;
    let tolerance = (0.05 * target.abs()).max(0.01);
    let reliable: Vec<usize> = (0..n).filter(|&i| rows[i].reliable()).collect();

    let fitted_rate = if reliable.len() >= 2 {
        let lx: Vec<f64> = reliable.iter().map(|&i| rows[i].epsilon.ln()).collect();
        let ly: Vec<f64> = reliable.iter().map(|&i| rows[i].abs_error.ln()).collect();
        linear_fit(&lx, &ly).map(|(_, b)| b)
    } else {
        None
    };

    let noisy: Vec<usize> = (0..n).filter(|i| !reliable.contains(i)).collect();
    let (fitted_limit, limit_std_error, extrapolated) = if n == 0 {
        (f64::NAN, f64::NAN, false)
    } else if reliable.len() >= 2 && fitted_rate.is_some_and(|r| r >= 0.5) {
        let a = &rows[reliable[reliable.len() - 2]];
        let b = &rows[reliable[reliable.len() - 1]];
        let r = a.epsilon / b.epsilon;
        let limit = (r * b.estimate - a.estimate) / (r - 1.0);
        let se = (r * r * b.std_error.powi(2) + a.std_error.powi(2)).sqrt() / (r - 1.0);
        (limit, se, true)
    } else if !noisy.is_empty() {
        let (limit, se) =
            weighted_mean(noisy.iter().map(|&i| (rows[i].estimate, rows[i].std_error)));
        (limit, se, false)
    } else {
        let last = &rows[n - 1];
        (last.estimate, last.std_error, false)
    };

    let monotone = rows.windows(2).all(|w| {
        let slack = 2.0 * (w[0].error_std_error.powi(2) + w[1].error_std_error.powi(2)).sqrt();
        w[1].abs_error <= w[0].abs_error + slack
    });
    let close = (fitted_limit - target).abs() < tolerance;
    let noise_dominated = n > 0 && reliable.is_empty();
    let verdict = if n < 2 {
        Verdict::Inconclusive
    } else if noise_dominated {
        if close && 3.0 * limit_std_error < tolerance {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    } else {
        Verdict::from_bool(close && monotone)
    };

    ConvergenceReport {
        task,
        target,
        tolerance,
        rows,
        reliable_points: reliable,
        fitted_rate,
        fitted_limit,
        limit_std_error,
        extrapolated,
        noise_dominated,
        monotone,
        verdict,
    }
}

/// Inverse-variance weighted mean; plain mean when some variance is zero.
fn weighted_mean(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points.collect();
    if pts.iter().any(|(_, s)| *s <= 0.0) {
        let m = pts.iter().map(|(v, _)| v).sum::<f64>() / pts.len() as f64;
        return (m, 0.0);
    }
    let w: f64 = pts.iter().map(|(_, s)| 1.0 / (s * s)).sum();
    let m = pts.iter().map(|(v, s)| v / (s * s)).sum::<f64>() / w;
    (m, 1.0 / w.sqrt())
}

/// Run the quotient for every `eps` of the schedule and judge convergence.
pub fn epsilon_sweep(task: &RepresentationTask) -> Result<ConvergenceReport> {
    task.validate()?;
    if task.epsilon_schedule.is_empty() {
        return Err(LabError::Precondition("epsilon schedule is empty".into()));
    }
    let rows = task
        .epsilon_schedule
        .par_iter()
        .map(|&eps| difference_quotient(task, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_report(task.summary(), rows))
}

/// [`epsilon_sweep`] in `L^p` mode. Needs a bounded alpha.
pub fn lp_sweep(task: &RepresentationTask, p: f64) -> Result<ConvergenceReport> {
    if task.gen.alpha.sup_bound.is_none() {
        return Err(LabError::Precondition(
            "L^p sweep needs a bounded alpha process".into(),
        ));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(LabError::Precondition(format!("p must be > 0, got {p}")));
    }
    epsilon_sweep(&task.clone().with_mode(ErrorMode::Lp { p }))
}

/// Zero-terminal problems on `[t, t + eps ^ tau]`.
#[derive(Clone, Debug)]
pub struct EnergyTask {
    pub gen: GeneratorSpec,
    pub coeffs: SdeCoefficients,
    pub t: f64,
    pub x: Vec<f64>,
    pub c0: f64,
    pub epsilon_schedule: Vec<f64>,
    pub solver: SolverConfig,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Ceiling on the last energy.
    pub atol: f64,
}

impl EnergyTask {
    pub fn new(
        gen: GeneratorSpec,
        coeffs: SdeCoefficients,
        x: Vec<f64>,
        c0: f64,
        epsilon_schedule: Vec<f64>,
        n_paths: usize,
        seed: u64,
    ) -> Self {
        let solver = SolverConfig::for_generator(&gen);
        Self {
            gen,
            coeffs,
            t: 0.0,
            x,
            c0,
            epsilon_schedule,
            solver,
            n_paths,
            n_steps: 64,
            seed,
            atol: 1e-2,
        }
    }

    pub fn summary(&self) -> EnergySummary {
        EnergySummary {
            generator: self.gen.name().to_string(),
            coefficients: self.coeffs.name().to_string(),
            t: self.t,
            x: self.x.clone(),
            c0: self.c0,
            epsilon_schedule: self.epsilon_schedule.clone(),
            solver: self.solver.clone(),
            n_paths: self.n_paths,
            n_steps: self.n_steps,
            seed: self.seed,
            atol: self.atol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub generator: String,
    pub coefficients: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub c0: f64,
    pub epsilon_schedule: Vec<f64>,
    pub solver: SolverConfig,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub atol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub epsilon: f64,
    /// `E[sum_k |Z_k|^2 dt] / eps`.
    pub energy: f64,
    pub std_error: f64,
    pub y0: f64,
    pub stopped_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub task: EnergySummary,
    pub rows: Vec<EnergyRow>,
    pub strictly_decreasing: bool,
    /// Last energy over first energy.
    pub ratio: f64,
    pub verdict: Verdict,
}

impl Tabular for DecayReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["epsilon", "energy", "std_error", "y0", "stopped_fraction"]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.epsilon.into(),
                    r.energy.into(),
                    r.std_error.into(),
                    r.y0.into(),
                    r.stopped_fraction.into(),
                ]
            })
            .collect()
    }
}

/// Scaled `Z` energy of the zero-terminal problem for each `eps`.
///
/// Passes when the last energy is at most `0.2` times the first and below
/// `atol`.
pub fn z_energy_decay(task: &EnergyTask) -> Result<DecayReport> {
    if task.gen.alpha.sup_bound.is_none() {
        return Err(LabError::Precondition(
            "energy decay needs a bounded alpha process".into(),
        ));
    }
    if task.epsilon_schedule.is_empty() {
        return Err(LabError::Precondition("epsilon schedule is empty".into()));
    }
    if task.epsilon_schedule.windows(2).any(|w| !(w[1] < w[0])) || task.epsilon_schedule[0] <= 0.0 {
        return Err(LabError::Precondition(
            "epsilon schedule must be positive and strictly decreasing".into(),
        ));
    }
    if task.gen.dim_z != task.coeffs.dim_w {
        return Err(LabError::Dimension {
            expected: task.coeffs.dim_w,
            got: task.gen.dim_z,
            context: "generator z dimension vs noise dimension",
        });
    }
    let rows = task
        .epsilon_schedule
        .par_iter()
        .map(|&eps| {
            let seed = derive_seed(task.seed, ENERGY_STREAM, eps.to_bits());
            let (paths, stop) = stopped_paths(
                &task.coeffs,
                task.t,
                &task.x,
                task.c0,
                eps,
                task.n_paths,
                task.n_steps,
                seed,
            )?;
            let terminal = vec![0.0; task.n_paths];
            let sol = solve_bsde(&task.gen, &terminal, &paths, Some(&stop), &task.solver)?;
            let e = sol.z_energy_estimate();
            Ok(EnergyRow {
                epsilon: eps,
                energy: e.value / eps,
                std_error: e.std_error / eps,
                y0: sol.initial_estimate().value,
                stopped_fraction: stop.fraction_stopped_early(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = rows[0].energy;
    let last = rows[rows.len() - 1].energy;
    let strictly_decreasing = rows.windows(2).all(|w| w[1].energy < w[0].energy);
    let ratio = if first > 0.0 { last / first } else { f64::NAN };
    let verdict = Verdict::from_bool(last <= 0.2 * first && last < task.atol);
    Ok(DecayReport {
        task: task.summary(),
        rows,
        strictly_decreasing,
        ratio,
        verdict,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    fn anchor(y: f64, q: f64) -> Anchor {
        Anchor {
            t: 0.0,
            x: vec![0.0],
            y,
            q: vec![q],
        }
    }

    fn quadratic_task(n_paths: usize, seed: u64) -> RepresentationTask {
        let gen = presets::pure_quadratic(1.0, 1).unwrap();
        RepresentationTask::new(
            gen,
            SdeCoefficients::brownian(1),
            anchor(0.0, 1.0),
            10.0,
            1.0,
            n_paths,
            seed,
        )
        .unwrap()
        .with_schedule(vec![0.25, 0.125, 0.0625])
    }

    #[test]
    fn driverless_driftless_quotient_vanishes() {
        let task = RepresentationTask::new(
            presets::zero(1),
            SdeCoefficients::brownian(1),
            anchor(0.3, 0.7),
            10.0,
            1.0,
            4096,
            5,
        )
        .unwrap();
        let q = difference_quotient(&task, 0.125).unwrap();
        assert!(q.estimate.abs() <= 3.0 * q.std_error + 1e-12, "{q:?}");
        assert_eq!(task.target(), 0.0);
    }

    #[test]
    fn deterministic_drift_gives_q_dot_b() {
        let coeffs = SdeCoefficients::deterministic_drift(vec![0.4], 1).unwrap();
        let task =
            RepresentationTask::new(presets::zero(1), coeffs, anchor(1.0, 2.5), 10.0, 1.0, 64, 1)
                .unwrap();
        for eps in [0.25, 0.01] {
            let q = difference_quotient(&task, eps).unwrap();
            assert!((q.estimate - 1.0).abs() < 1e-12, "{q:?}");
        }
        assert!((task.target() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_quotient_is_eps_independent() {
        let report = epsilon_sweep(&quadratic_task(8192, 11)).unwrap();
        assert!((report.target - 0.5).abs() < 1e-15);
        for r in &report.rows {
            assert!(
                (r.estimate - 0.5).abs() <= 3.0 * r.std_error + 1e-12,
                "{r:?}"
            );
        }
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report.noise_dominated);
    }

    #[test]
    fn linear_driver_converges_at_rate_one() {
        let gen = presets::linear_y(1.0, 1).unwrap();
        let coeffs = SdeCoefficients::constant_drift(vec![0.3]).unwrap();
        let task =
            RepresentationTask::new(gen, coeffs, anchor(1.0, 1.0), 5.0, 1.0, 4096, 3).unwrap();
        let report = epsilon_sweep(&task).unwrap();
        assert!((report.target + 0.7).abs() < 1e-12);
        // Exact discrete value: ((1 + b eps)(1 + eps/n)^-n - 1) / eps.
        for r in &report.rows {
            let e = r.epsilon;
            let exact = ((1.0 + 0.3 * e) * (1.0 + e / 64.0).powi(-64) - 1.0) / e;
            assert!((r.estimate - exact).abs() < 1e-9, "{r:?} vs {exact}");
        }
        let rate = report.fitted_rate.unwrap();
        assert!((rate - 1.0).abs() < 0.1, "rate {rate}");
        assert!(
            (report.fitted_limit + 0.7).abs() < 0.01,
            "{}",
            report.fitted_limit
        );
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn single_point_schedule_is_inconclusive() {
        let task = quadratic_task(1024, 2).with_schedule(vec![1.0]);
        let report = epsilon_sweep(&task).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn eps_beyond_horizon_is_rejected() {
        let task = quadratic_task(64, 2);
        assert!(matches!(
            difference_quotient(&task, 1.5),
            Err(LabError::Precondition(_))
        ));
        assert!(task
            .clone()
            .with_schedule(vec![0.1, 0.2])
            .validate()
            .is_err());
    }

    #[test]
    fn l1_and_lp_one_agree_exactly() {
        let task = quadratic_task(2048, 9);
        let a = epsilon_sweep(&task).unwrap();
        let b = lp_sweep(&task, 1.0).unwrap();
        for (r, s) in a.rows.iter().zip(&b.rows) {
            assert_eq!(r.abs_error, s.abs_error);
            assert_eq!(r.estimate, s.estimate);
        }
        let half = lp_sweep(&task, 0.5).unwrap();
        assert!(half.rows.iter().all(|r| r.abs_error.is_finite()));
    }

    #[test]
    fn lp_needs_bounded_alpha() {
        let mut task = quadratic_task(64, 1);
        task.gen.alpha.sup_bound = None;
        assert!(lp_sweep(&task, 2.0).is_err());
    }

    #[test]
    fn richardson_uses_last_two_reliable_points() {
        let row = |eps: f64, est: f64| QuotientEstimate {
            epsilon: eps,
            estimate: est,
            std_error: 1e-6,
            target: 1.0,
            abs_error: (est - 1.0).abs(),
            error_std_error: 1e-6,
            spread: PathSpread {
                min: est,
                max: est,
                sd: 0.0,
            },
            stopped_fraction: 0.0,
            clipped_fraction: 0.0,
            picard_iterations: 1,
        };
        let rows = vec![row(0.4, 1.4), row(0.2, 1.2), row(0.1, 1.1)];
        let report = assemble_report(quadratic_task(64, 1).summary(), rows);
        assert!(report.extrapolated);
        assert!((report.fitted_limit - 1.0).abs() < 1e-12);
        assert!((report.fitted_rate.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn growing_errors_fail() {
        let row = |eps: f64, est: f64| QuotientEstimate {
            epsilon: eps,
            estimate: est,
            std_error: 1e-6,
            target: 0.0,
            abs_error: est.abs(),
            error_std_error: 1e-6,
            spread: PathSpread {
                min: est,
                max: est,
                sd: 0.0,
            },
            stopped_fraction: 0.0,
            clipped_fraction: 0.0,
            picard_iterations: 1,
        };
        let rows = vec![row(0.4, 0.1), row(0.2, 0.2), row(0.1, 0.4)];
        let report = assemble_report(quadratic_task(64, 1).summary(), rows);
        assert!(!report.monotone);
        assert_eq!(report.verdict, Verdict::Fail);
    }

    #[test]
    fn constant_driver_has_no_z_energy() {
        let gen = presets::constant(0.7, 1).unwrap();
        let task = EnergyTask::new(
            gen,
            SdeCoefficients::brownian(1),
            vec![0.0],
            10.0,
            vec![0.2, 0.1],
            2048,
            4,
        );
        let report = z_energy_decay(&task).unwrap();
        for r in &report.rows {
            assert!(r.energy < 1e-20, "{r:?}");
            assert!((r.y0 - 0.7 * r.epsilon).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_driver_energy_is_zero_and_passes() {
        let task = EnergyTask::new(
            presets::zero(1),
            SdeCoefficients::brownian(1),
            vec![0.0],
            10.0,
            vec![0.2, 0.1],
            512,
            4,
        );
        let report = z_energy_decay(&task).unwrap();
        assert!(report.rows.iter().all(|r| r.energy == 0.0));
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn conditional_anchor_uses_prior_brownian_value() {
        let gen = presets::mixed(&presets::MixedParams::default()).unwrap();
        let anchor = Anchor {
            t: 0.5,
            x: vec![0.0],
            y: 0.2,
            q: vec![0.5],
        };
        let task = RepresentationTask::new(
            gen,
            SdeCoefficients::brownian(1),
            anchor,
            10.0,
            1.0,
            4096,
            8,
        )
        .unwrap()
        .with_schedule(vec![0.125, 0.0625])
        .with_mode(ErrorMode::Pathwise);
        assert_eq!(task.solver.regressors, Regressors::StateAndBrownian);
        let report = epsilon_sweep(&task).unwrap();
        for r in &report.rows {
            assert!(r.spread.max > r.spread.min, "{r:?}");
            assert!(r.abs_error.is_finite());
        }
    }
}
