//! Report types of the runner commands and their CSV layouts.

use serde::{Deserialize, Serialize};

use crate::approx::{LocalizationReport, SequenceReport};
use crate::bsde::{BoundReport, DiagnosticsRow, SolverDiagnostics};
use crate::model::ValidationReport;
use crate::numeric::{mean_sd, Estimate};
use crate::report::{Cell, Tabular, Verdict};
use crate::sde::{PathBundle, StoppingTimeField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub reports: Vec<ValidationReport>,
    pub verdict: Verdict,
}

impl Tabular for ValidateReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "subject",
            "clause",
            "passed",
            "samples",
            "worst_excess",
            "worst_ratio",
        ]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let mut out = Vec::new();
        for r in &self.reports {
            for c in &r.clauses {
                out.push(vec![
                    r.subject.as_str().into(),
                    c.clause.as_str().into(),
                    c.passed.into(),
                    c.samples.into(),
                    c.worst_excess.into(),
                    c.worst_ratio.unwrap_or(f64::NAN).into(),
                ]);
            }
        }
        out
    }
}

/// Cross-sectional statistics of the first state component at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub k: usize,
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    /// Fraction of paths stopped at or before this step.
    pub stopped: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub fraction_stopped_early: Option<f64>,
    pub steps: Vec<StepRow>,
    /// Binary column files, relative to the output directory.
    pub files: Vec<String>,
    pub verdict: Verdict,
}

impl SimulateReport {
    pub fn from_paths(
        paths: &PathBundle,
        stop: Option<&StoppingTimeField>,
        files: Vec<String>,
    ) -> Self {
        let grid = paths.grid();
        let steps = (0..=grid.n_steps())
            .map(|k| {
                let xs: Vec<f64> = (0..paths.n_paths())
                    .map(|p| paths.state_at(p, k)[0])
                    .collect();
                let (mean, sd) = mean_sd(&xs);
                let stopped = stop.map_or(0.0, |s| {
                    s.tau_index
                        .iter()
                        .filter(|&&i| i <= k && i < s.cap_index)
                        .count() as f64
                        / paths.n_paths() as f64
                });
                StepRow {
                    k,
                    t: grid.point(k),
                    mean,
                    variance: sd * sd,
                    stopped,
                }
            })
            .collect();
        Self {
            n_paths: paths.n_paths(),
            n_steps: grid.n_steps(),
            seed: paths.seed(),
            fraction_stopped_early: stop.map(StoppingTimeField::fraction_stopped_early),
            steps,
            files,
            verdict: Verdict::Pass,
        }
    }
}

impl Tabular for SimulateReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["k", "t", "mean", "variance", "stopped"]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.steps
            .iter()
            .map(|r| {
                vec![
                    r.k.into(),
                    r.t.into(),
                    r.mean.into(),
                    r.variance.into(),
                    r.stopped.into(),
                ]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub rows: Vec<DiagnosticsRow>,
    /// Control-variate estimate of `Y_0`.
    pub y0: Estimate,
    pub regression: Estimate,
    pub oracle: Option<Estimate>,
    pub diagnostics: SolverDiagnostics,
    pub bounds: Vec<BoundReport>,
    pub verdict: Verdict,
}

impl Tabular for SolveReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "preset",
            "n_paths",
            "dt",
            "y0",
            "std_error",
            "picard_iterations",
            "clipped_fraction",
        ]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.preset.as_str().into(),
                    r.n_paths.into(),
                    r.dt.into(),
                    r.y0.into(),
                    r.std_error.into(),
                    r.picard_iterations.into(),
                    r.clipped_fraction.into(),
                ]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub sequence: SequenceReport,
    pub localization: Vec<LocalizationReport>,
    pub psi_decreasing: bool,
    pub verdict: Verdict,
}

impl Tabular for ApproxReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "n",
            "x",
            "f_n",
            "f",
            "envelope",
            "gap",
            "bound_ok",
            "monotone_ok",
        ]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.sequence
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.into(),
                    r.x.as_slice().into(),
                    r.f_n.into(),
                    r.f.into(),
                    r.envelope.into(),
                    r.gap.into(),
                    r.bound_ok.into(),
                    r.monotone_ok.into(),
                ]
            })
            .collect()
    }
}
