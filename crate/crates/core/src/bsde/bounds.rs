//! A-priori bounds on `|Y|` checked against a numerical solution. Sups over
//! paths are empirical essential sups.

use serde::{Deserialize, Serialize};

use super::BsdeSolution;
use crate::error::{LabError, Result};
use crate::model::GeneratorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub clause: String,
    pub status: BoundStatus,
    /// Empirical essential sup of `|Y|`.
    pub observed: f64,
    pub bound: f64,
    /// `bound / observed`, absent when nothing was observed.
    pub margin: Option<f64>,
    pub slack: f64,
}

impl BoundReport {
    fn judge(clause: &str, observed: f64, bound: Option<f64>, slack: f64) -> Self {
        let Some(bound) = bound else {
            return Self {
                clause: clause.into(),
                status: BoundStatus::NotApplicable,
                observed,
                bound: f64::NAN,
                margin: None,
                slack,
            };
        };
        let ok = observed <= bound * (1.0 + slack) + 1e-12;
        Self {
            clause: clause.into(),
            status: if ok {
                BoundStatus::Pass
            } else {
                BoundStatus::Fail
            },
            observed,
            bound,
            margin: (observed > 0.0).then(|| bound / observed),
            slack,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != BoundStatus::Fail
    }
}

/// `sup |Y| <= e^{beta T} (||xi||_inf + ||int alpha||_inf)` over the solved horizon.
pub fn check_bound_global(
    sol: &BsdeSolution,
    gen: &GeneratorSpec,
    terminal: &[f64],
    slack: f64,
) -> BoundReport {
    let horizon = sol.grid().len();
    let xi_sup = terminal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = gen
        .alpha
        .integral_bound_over(horizon)
        .map(|ia| (gen.beta * horizon).exp() * (xi_sup + ia));
    BoundReport::judge("global", sol.sup_abs_y(), bound, slack)
}

/// Small-horizon bounds for a zero terminal on `[t, t + eps]`:
/// `sup |Y| <= eps e^{beta eps} ||alpha||_inf` and
/// `sup |Y| <= e^{beta eps} ||int_t^{t+eps} alpha||_inf`.
pub fn check_bound_small_horizon(
    sol: &BsdeSolution,
    gen: &GeneratorSpec,
    slack: f64,
) -> Result<Vec<BoundReport>> {
    if sol.terminal().iter().any(|&v| v != 0.0) {
        return Err(LabError::Precondition(
            "small-horizon bounds need a zero terminal".into(),
        ));
    }
    let eps = sol.grid().len();
    let growth = (gen.beta * eps).exp();
    let observed = sol.sup_abs_y();
    Ok(vec![
        BoundReport::judge(
            "small_horizon_sup_alpha",
            observed,
            gen.alpha.sup_bound.map(|a| eps * growth * a),
            slack,
        ),
        BoundReport::judge(
            "small_horizon_integral_alpha",
            observed,
            gen.alpha.integral_bound_over(eps).map(|ia| growth * ia),
            slack,
        ),
    ])
}

/// Observed small-horizon sups along a decreasing schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallHorizonSweep {
    pub epsilons: Vec<f64>,
    pub sups: Vec<f64>,
    /// Non-increasing along the schedule, and strictly smaller at the end
    /// unless everything is zero.
    pub shrinking: bool,
}

pub fn small_horizon_sweep(points: &[(f64, f64)]) -> SmallHorizonSweep {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sups: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let non_increasing = sups.windows(2).all(|w| w[1] <= w[0]);
    let shrinking = non_increasing
        && match (sups.first(), sups.last()) {
            (Some(&a), Some(&b)) => b < a || a == 0.0,
            _ => false,
        };
    SmallHorizonSweep {
        epsilons: pts.iter().map(|p| p.0).collect(),
        sups,
        shrinking,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{solve_bsde, Basis, Regressors, SolverConfig};
    use crate::model::{presets, TimeGrid};
    use crate::sde::{simulate_brownian, PathBundle};

    fn paths(horizon: f64, n_steps: usize, seed: u64) -> PathBundle {
        simulate_brownian(
            &TimeGrid::new(0.0, horizon, n_steps).unwrap(),
            2000,
            1,
            seed,
        )
        .unwrap()
    }

    fn cfg(gen: &GeneratorSpec) -> SolverConfig {
        SolverConfig::for_generator(gen)
            .with_regressors(Regressors::Brownian)
            .with_basis(Basis::PiecewiseConstant { bins: 8 })
    }

    #[test]
    fn driverless_constant_terminal_attains_bound() {
        let gen = presets::zero(1);
        let b = paths(1.0, 16, 1);
        let sol = solve_bsde(&gen, &[1.5; 2000], &b, None, &cfg(&gen)).unwrap();
        let r = check_bound_global(&sol, &gen, &[1.5; 2000], 1e-6);
        assert_eq!(r.status, BoundStatus::Pass);
        assert!((r.observed - r.bound).abs() < 1e-12);
    }

    #[test]
    fn constant_alpha_attains_small_horizon_bound() {
        let gen = presets::constant(2.0, 1).unwrap();
        let b = paths(0.1, 10, 2);
        let sol = solve_bsde(&gen, &[0.0; 2000], &b, None, &cfg(&gen)).unwrap();
        let reps = check_bound_small_horizon(&sol, &gen, 1e-6).unwrap();
        for r in &reps {
            assert_eq!(r.status, BoundStatus::Pass);
            assert!((r.observed - 0.2).abs() < 1e-12 && (r.bound - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_alpha_bounds_are_not_applicable() {
        let mut gen = presets::zero(1);
        gen.alpha.sup_bound = None;
        let b = paths(0.1, 4, 3);
        let sol = solve_bsde(&gen, &[0.0; 2000], &b, None, &cfg(&gen)).unwrap();
        assert_eq!(
            check_bound_global(&sol, &gen, &[0.0; 2000], 0.0).status,
            BoundStatus::NotApplicable
        );
        let reps = check_bound_small_horizon(&sol, &gen, 0.0).unwrap();
        assert!(reps.iter().all(|r| r.status == BoundStatus::NotApplicable));
    }

    #[test]
    fn nonzero_terminal_rejected_for_small_horizon() {
        let gen = presets::zero(1);
        let b = paths(0.1, 4, 4);
        let sol = solve_bsde(&gen, &[1.0; 2000], &b, None, &cfg(&gen)).unwrap();
        assert!(check_bound_small_horizon(&sol, &gen, 0.0).is_err());
    }

    #[test]
    fn sweep_ordering() {
        assert!(small_horizon_sweep(&[(0.05, 0.1), (0.2, 0.4), (0.1, 0.2)]).shrinking);
        assert!(!small_horizon_sweep(&[(0.05, 0.3), (0.2, 0.4), (0.1, 0.2)]).shrinking);
        assert!(small_horizon_sweep(&[(0.2, 0.0), (0.1, 0.0)]).shrinking);
    }
}
