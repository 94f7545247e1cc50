//! Converse comparison: ordered solutions imply ordered generators.
//!
//! The ordering hypothesis is checked on the family of terminals
//! `y + z.(B_{t+eps^tau} - B_t)` with exit-time stopping, for every probe and
//! every `eps` of the schedule. When it holds, both difference-quotient limits
//! are estimated at each probe and compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{solve_bsde, BsdeSolution, SolverConfig};
use crate::error::{LabError, Result};
use crate::model::{
    validate_assumption_a, GeneratorSamplePlan, GeneratorSpec, SdeCoefficients, Tolerance,
};
use crate::report::{Cell, Tabular, Verdict};
use crate::representation::{
    assemble_report, epsilon_seed, linear_terminal, quotient_from_solution, stopped_paths, Anchor,
    ConvergenceReport, RepresentationTask,
};
use crate::rng::derive_seed;
use crate::sde::{PathBundle, StoppingTimeField};

const PROBE_STREAM: u64 = 0x5052_4f42;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    /// Smallest `Y1 - Y2` over paths and grid points.
    pub min_diff: f64,
    /// Largest `Y1 - Y2` over paths and grid points.
    pub max_diff: f64,
    /// `(path, step)` of the smallest difference.
    pub witness: (usize, usize),
    /// Difference of the initial-value estimates.
    pub y0_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare two solutions computed on the same paths.
pub fn order_from_solutions(
    s1: &BsdeSolution,
    s2: &BsdeSolution,
    tolerance: f64,
) -> Result<OrderReport> {
    if s1.y_values().len() != s2.y_values().len() {
        return Err(LabError::Dimension {
            expected: s1.y_values().len(),
            got: s2.y_values().len(),
            context: "solutions on different path bundles",
        });
    }
    let cols = s1.grid().n_steps() + 1;
    let mut min_diff = f64::INFINITY;
    let mut max_diff = f64::NEG_INFINITY;
    let mut witness = (0, 0);
    for (i, (a, b)) in s1.y_values().iter().zip(s2.y_values()).enumerate() {
        let d = a - b;
        if d < min_diff {
            min_diff = d;
            witness = (i / cols, i % cols);
        }
        max_diff = max_diff.max(d);
    }
    Ok(OrderReport {
        min_diff,
        max_diff,
        witness,
        y0_diff: s1.initial_estimate().value - s2.initial_estimate().value,
        tolerance,
        passed: min_diff >= -tolerance,
    })
}

/// Solve both problems on the shared paths and terminal and compare `Y1 >= Y2`.
pub fn solution_order_check(
    g1: &GeneratorSpec,
    g2: &GeneratorSpec,
    terminal: &[f64],
    paths: &PathBundle,
    stop: Option<&StoppingTimeField>,
    cfg: &SolverConfig,
    tolerance: f64,
) -> Result<OrderReport> {
    let s1 = solve_bsde(g1, terminal, paths, stop, cfg)?;
    let s2 = solve_bsde(g2, terminal, paths, stop, cfg)?;
    order_from_solutions(&s1, &s2, tolerance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub y: f64,
    pub z: Vec<f64>,
}

/// `y, z in {-1, 0, 1}`, with `z` repeated along every axis.
pub fn default_probes(dim_z: usize) -> Vec<Probe> {
    let mut out = Vec::new();
    for y in [-1.0, 0.0, 1.0] {
        for z in [-1.0, 0.0, 1.0] {
            out.push(Probe {
                y,
                z: vec![z; dim_z],
            });
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct CompareTask {
    pub g1: GeneratorSpec,
    pub g2: GeneratorSpec,
    pub t: f64,
    pub probes: Vec<Probe>,
    pub epsilon_schedule: Vec<f64>,
    pub c0: f64,
    pub horizon: f64,
    pub solver: SolverConfig,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Slack on `Y1 - Y2 >= 0` in the hypothesis check.
    pub order_tolerance: f64,
}

impl CompareTask {
    /// Default probes and schedule, `t = 0`, `T = 1`, `C0 = 10`, 64 steps.
    pub fn new(g1: GeneratorSpec, g2: GeneratorSpec, n_paths: usize, seed: u64) -> Self {
        let solver = SolverConfig::for_generator(&g1);
        let solver = SolverConfig {
            z_clip: solver.z_clip.max(SolverConfig::for_generator(&g2).z_clip),
            ..solver
        };
        Self {
            probes: default_probes(g1.dim_z),
            g1,
            g2,
            t: 0.0,
            epsilon_schedule: crate::representation::default_schedule(1.0),
            c0: 10.0,
            horizon: 1.0,
            solver,
            n_paths,
            n_steps: 64,
            seed,
            order_tolerance: 1e-8,
        }
    }

    /// The same task with the generators swapped.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        std::mem::swap(&mut out.g1, &mut out.g2);
        out
    }

    pub fn summary(&self) -> CompareSummary {
        CompareSummary {
            g1: self.g1.name().to_string(),
            g2: self.g2.name().to_string(),
            t: self.t,
            probes: self.probes.clone(),
            epsilon_schedule: self.epsilon_schedule.clone(),
            c0: self.c0,
            horizon: self.horizon,
            solver: self.solver.clone(),
            n_paths: self.n_paths,
            n_steps: self.n_steps,
            seed: self.seed,
            order_tolerance: self.order_tolerance,
        }
    }

    fn representation(
        &self,
        gen: &GeneratorSpec,
        probe: &Probe,
        seed: u64,
    ) -> Result<RepresentationTask> {
        let d = gen.dim_z;
        let anchor = Anchor {
            t: self.t,
            x: vec![0.0; d],
            y: probe.y,
            q: probe.z.clone(),
        };
        Ok(RepresentationTask::new(
            gen.clone(),
            SdeCoefficients::brownian(d),
            anchor,
            self.c0,
            self.horizon,
            self.n_paths,
            seed,
        )?
        .with_schedule(self.epsilon_schedule.clone())
        .with_solver(self.solver.clone())
        .with_n_steps(self.n_steps))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub g1: String,
    pub g2: String,
    pub t: f64,
    pub probes: Vec<Probe>,
    pub epsilon_schedule: Vec<f64>,
    pub c0: f64,
    pub horizon: f64,
    pub solver: SolverConfig,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub order_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub y: f64,
    pub z: Vec<f64>,
    pub limit1: f64,
    pub limit1_std_error: f64,
    pub limit2: f64,
    pub limit2_std_error: f64,
    /// `limit1 - limit2`.
    pub difference: f64,
    pub tolerance: f64,
    pub direct_g1: f64,
    pub direct_g2: f64,
    pub order_ok: bool,
    pub direct_ok: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub cases: usize,
    pub violations: usize,
    pub min_diff: f64,
    /// Probe index and `eps` of the worst case.
    pub witness: Option<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOrderReport {
    pub task: CompareSummary,
    pub hypothesis: HypothesisCheck,
    pub hypothesis_violated: bool,
    pub rows: Vec<ProbeRow>,
    pub sweeps1: Vec<ConvergenceReport>,
    pub sweeps2: Vec<ConvergenceReport>,
    pub note: String,
    pub verdict: Verdict,
}

impl Tabular for GeneratorOrderReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "y",
            "z",
            "limit1",
            "limit2",
            "difference",
            "tolerance",
            "direct_g1",
            "direct_g2",
            "verdict",
        ]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.y.into(),
                    r.z.as_slice().into(),
                    r.limit1.into(),
                    r.limit2.into(),
                    r.difference.into(),
                    r.tolerance.into(),
                    r.direct_g1.into(),
                    r.direct_g2.into(),
                    r.verdict.into(),
                ]
            })
            .collect()
    }
}

struct ProbeOutcome {
    sweep1: ConvergenceReport,
    sweep2: ConvergenceReport,
    orders: Vec<OrderReport>,
}

fn run_probe(task: &CompareTask, index: usize) -> Result<ProbeOutcome> {
    let probe = &task.probes[index];
    let seed = derive_seed(task.seed, PROBE_STREAM, index as u64);
    let t1 = task.representation(&task.g1, probe, seed)?;
    let t2 = task.representation(&task.g2, probe, seed)?;
    let x = vec![0.0; task.g1.dim_z];
    let coeffs = SdeCoefficients::brownian(task.g1.dim_z);
    let per_eps = task
        .epsilon_schedule
        .par_iter()
        .map(|&eps| {
            let (paths, stop) = stopped_paths(
                &coeffs,
                task.t,
                &x,
                task.c0,
                eps,
                task.n_paths,
                task.n_steps,
                epsilon_seed(seed, eps),
            )?;
            let terminal = linear_terminal(&paths, &stop, &x, probe.y, &probe.z);
            let s1 = solve_bsde(&task.g1, &terminal, &paths, Some(&stop), &task.solver)?;
            let s2 = solve_bsde(&task.g2, &terminal, &paths, Some(&stop), &task.solver)?;
            let order = order_from_solutions(&s1, &s2, task.order_tolerance)?;
            Ok((
                quotient_from_solution(&t1, eps, &paths, &stop, &s1),
                quotient_from_solution(&t2, eps, &paths, &stop, &s2),
                order,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows1 = Vec::new();
    let mut rows2 = Vec::new();
    let mut orders = Vec::new();
    for (a, b, o) in per_eps {
        rows1.push(a);
        rows2.push(b);
        orders.push(o);
    }
    Ok(ProbeOutcome {
        sweep1: assemble_report(t1.summary(), rows1),
        sweep2: assemble_report(t2.summary(), rows2),
        orders,
    })
}

fn check_assumption(gen: &GeneratorSpec, t: f64) -> Result<()> {
    let plan = GeneratorSamplePlan::lattice(vec![t], 3.0, 13, 3.0, 13, gen.dim_z);
    let report = validate_assumption_a(gen, &plan, Tolerance::default())?;
    if report.passed() {
        Ok(())
    } else {
        let bad: Vec<&str> = report
            .clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.clause.as_str())
            .collect();
        Err(LabError::Precondition(format!(
            "generator '{}' fails {}",
            gen.name(),
            bad.join(", ")
        )))
    }
}

/// Infer the generator ordering from the solution ordering at every probe.
///
/// When some test terminal gives `Y1 < Y2` the converse statement does not apply and
/// the verdict is inconclusive with `hypothesis_violated` set.
pub fn converse_compare(task: &CompareTask) -> Result<GeneratorOrderReport> {
    if task.g1.dim_z != task.g2.dim_z {
        return Err(LabError::Dimension {
            expected: task.g1.dim_z,
            got: task.g2.dim_z,
            context: "z dimensions of the compared generators",
        });
    }
    if task.probes.is_empty() || task.epsilon_schedule.is_empty() {
        return Err(LabError::Precondition(
            "need at least one probe and one eps".into(),
        ));
    }
    check_assumption(&task.g1, task.t)?;
    check_assumption(&task.g2, task.t)?;

    let outcomes = (0..task.probes.len())
        .into_par_iter()
        .map(|i| run_probe(task, i))
        .collect::<Result<Vec<_>>>()?;

    let mut hypothesis = HypothesisCheck {
        cases: 0,
        violations: 0,
        min_diff: f64::INFINITY,
        witness: None,
    };
    let mut rows = Vec::new();
    for (i, out) in outcomes.iter().enumerate() {
        for (o, &eps) in out.orders.iter().zip(&task.epsilon_schedule) {
            hypothesis.cases += 1;
            if !o.passed {
                hypothesis.violations += 1;
            }
            if o.min_diff < hypothesis.min_diff {
                hypothesis.min_diff = o.min_diff;
                hypothesis.witness = Some((i, eps));
            }
        }
        let probe = &task.probes[i];
        let zero = vec![0.0; task.g1.dim_z];
        let direct_g1 = task.g1.eval(task.t, probe.y, &probe.z, &zero);
        let direct_g2 = task.g2.eval(task.t, probe.y, &probe.z, &zero);
        let (l1, l2) = (&out.sweep1, &out.sweep2);
        let tolerance =
            (2.0 * (l1.limit_std_error.powi(2) + l2.limit_std_error.powi(2)).sqrt()).max(1e-2);
        let difference = l1.fitted_limit - l2.fitted_limit;
        let order_ok = difference >= -tolerance;
        let direct_ok = direct_g1 >= direct_g2 - 1e-12;
        rows.push(ProbeRow {
            y: probe.y,
            z: probe.z.clone(),
            limit1: l1.fitted_limit,
            limit1_std_error: l1.limit_std_error,
            limit2: l2.fitted_limit,
            limit2_std_error: l2.limit_std_error,
            difference,
            tolerance,
            direct_g1,
            direct_g2,
            order_ok,
            direct_ok,
            verdict: Verdict::from_bool(order_ok && direct_ok),
        });
    }
    let hypothesis_violated = hypothesis.violations > 0;
    let (verdict, note) = if hypothesis_violated {
        (
            Verdict::Inconclusive,
            "hypothesis violated: solutions are not ordered on the test family".to_string(),
        )
    } else {
        let v = rows
            .iter()
            .fold(Verdict::Pass, |acc, r| acc.combine(r.verdict));
        (v, String::new())
    };
    let (sweeps1, sweeps2) = outcomes.into_iter().map(|o| (o.sweep1, o.sweep2)).unzip();
    Ok(GeneratorOrderReport {
        task: task.summary(),
        hypothesis,
        hypothesis_violated,
        rows,
        sweeps1,
        sweeps2,
        note,
        verdict,
    })
}
