//! Configuration-driven experiment runner.
//!
//! Exit status: 0 pass, 1 property failure or numerical failure, 2
//! inconclusive, 3 configuration or output error.

pub mod config;
mod tables;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

use crate::approx::{
    approx_sequence_check, generator_localization, probe_lattice, InfConvSpec, LocalizationContext,
    LocalizationReport, LocalizationSettings, SequenceReport,
};
use crate::bsde::{
    check_bound_global, oracle_cole_hopf, oracle_linear, solve_bsde, BoundReport, SolverDiagnostics,
};
use crate::comparison::{converse_compare, CompareTask, GeneratorOrderReport};
use crate::error::{LabError, Result};
use crate::model::{
    validate_assumption_a, validate_coefficients, CoefficientSamplePlan, GeneratorSamplePlan,
    TimeGrid, Tolerance, ValidationReport,
};
use crate::numeric::Estimate;
use crate::pathio::{brownian_columns, state_columns};
use crate::report::{csv_string, json_string, Tabular, Verdict};
use crate::representation::{
    epsilon_sweep, lp_sweep, z_energy_decay, Anchor, ConvergenceReport, DecayReport, EnergyTask,
    RepresentationTask,
};
use crate::sde::{euler_maruyama, hitting_time, simulate_brownian};

pub use config::{Command, ExperimentConfig};
pub use tables::{SimulateReport, SolveReport, StepRow, ValidateReport};

#[derive(Parser, Debug)]
#[command(
    name = "bsde-lab",
    version,
    about = "Run a BSDE experiment described by a JSON config"
)]
pub struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for report files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress the verdict line.
    #[arg(long)]
    pub quiet: bool,
}

/// What a finished run produced.
#[derive(Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Status code for an error.
pub fn error_exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Config(_)
        | LabError::Precondition(_)
        | LabError::Io { .. }
        | LabError::Format(_)
        | LabError::Dimension { .. }
        | LabError::Domain(_)
        | LabError::Spec(_) => 3,
        _ => 1,
    }
}

/// Parse arguments, run, print, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("bsde-lab: {e}");
            return 3;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("bsde-lab: cannot start worker pool: {e}");
            return 3;
        }
    };
    match pool.install(|| run(&args)) {
        Ok(out) => {
            if !args.quiet {
                println!("{}", out.summary);
            }
            out.verdict.exit_code()
        }
        Err(e) => {
            eprintln!("bsde-lab: {e}");
            error_exit_code(&e)
        }
    }
}

/// `BSDE_LAB_THREADS`, 0 or unset meaning one worker per core.
fn thread_count() -> Result<usize> {
    match std::env::var("BSDE_LAB_THREADS") {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            LabError::Config(format!(
                "BSDE_LAB_THREADS must be a non-negative integer, got '{v}'"
            ))
        }),
        _ => Ok(0),
    }
}

/// Load, resolve and execute the configured command.
pub fn run(args: &Args) -> Result<Outcome> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    cfg.resolve()?;
    run_config(&cfg, &args.out_dir)
}

#[derive(Serialize)]
struct Document<'a, R: Serialize> {
    config: &'a ExperimentConfig,
    report: &'a R,
}

fn write_outputs<R: Serialize + Tabular>(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    report: &R,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let name = cfg.command.name();
    let csv = out_dir.join(
        cfg.output
            .csv
            .clone()
            .unwrap_or_else(|| format!("{name}.csv")),
    );
    let json = out_dir.join(
        cfg.output
            .json
            .clone()
            .unwrap_or_else(|| format!("{name}.json")),
    );
    let csv_text = csv_string(report);
    let json_text = json_string(&Document {
        config: cfg,
        report,
    })?;
    std::fs::write(&csv, csv_text).map_err(|e| LabError::io(&csv, e))?;
    std::fs::write(&json, json_text).map_err(|e| LabError::io(&json, e))?;
    Ok(vec![csv, json])
}

/// Execute an already resolved configuration.
pub fn run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let name = cfg.command.name();
    let (verdict, detail, files) = match cfg.command {
        Command::Validate => {
            let r = run_validate(cfg)?;
            let files = write_outputs(cfg, out_dir, &r)?;
            (
                r.verdict,
                format!(
                    "{} clauses checked",
                    r.reports.iter().map(|v| v.clauses.len()).sum::<usize>()
                ),
                files,
            )
        }
        Command::Simulate => {
            let r = run_simulate(cfg, out_dir)?;
            let mut files = write_outputs(cfg, out_dir, &r)?;
            files.extend(r.files.iter().map(|f| out_dir.join(f)));
            (
                r.verdict,
                format!("{} paths x {} steps", r.n_paths, r.n_steps),
                files,
            )
        }
        Command::Solve => {
            let r = run_solve(cfg)?;
            let files = write_outputs(cfg, out_dir, &r)?;
            let detail = match &r.oracle {
                Some(o) => format!(
                    "y0={:.6e} +- {:.2e}, oracle={:.6e}",
                    r.y0.value, r.y0.std_error, o.value
                ),
                None => format!("y0={:.6e} +- {:.2e}", r.y0.value, r.y0.std_error),
            };
            (r.verdict, detail, files)
        }
        Command::Approx => {
            let r = run_approx(cfg)?;
            let files = write_outputs(cfg, out_dir, &r)?;
            let gap = r.sequence.max_gap.last().copied().unwrap_or(f64::NAN);
            (r.verdict, format!("final max gap {gap:.6e}"), files)
        }
        Command::Represent | Command::LpSweep => {
            let r = run_represent(cfg)?;
            let files = write_outputs(cfg, out_dir, &r)?;
            let detail = format!(
                "fitted_limit={:.6e} target={:.6e} rate={}",
                r.fitted_limit,
                r.target,
                r.fitted_rate
                    .map_or("n/a".to_string(), |v| format!("{v:.3}"))
            );
            (r.verdict, detail, files)
        }
        Command::ZEnergy => {
            let r = run_energy(cfg)?;
            let files = write_outputs(cfg, out_dir, &r)?;
            let last = r.rows.last().map_or(f64::NAN, |x| x.energy);
            (
                r.verdict,
                format!("final energy {last:.6e}, ratio {:.3e}", r.ratio),
                files,
            )
        }
        Command::Compare => {
            let r = run_compare(cfg)?;
            let files = write_outputs(cfg, out_dir, &r)?;
            let detail = if r.hypothesis_violated {
                r.note.clone()
            } else {
                format!("{} probes", r.rows.len())
            };
            (r.verdict, detail, files)
        }
    };
    Ok(Outcome {
        verdict,
        summary: format!("{name}: {} ({detail})", verdict.as_str()),
        files,
    })
}

fn anchor(cfg: &ExperimentConfig) -> Anchor {
    let a = cfg.anchor.clone().expect("resolved config has an anchor");
    Anchor {
        t: a.t,
        x: a.x.unwrap_or_default(),
        y: a.y,
        q: a.q.unwrap_or_default(),
    }
}

fn run_validate(cfg: &ExperimentConfig) -> Result<ValidateReport> {
    let times = vec![0.0, 0.5 * cfg.horizon, cfg.horizon];
    let mut reports = Vec::new();
    for g in [&cfg.generator, &cfg.generator2].into_iter().flatten() {
        let gen = g.build()?;
        let plan = GeneratorSamplePlan::lattice(times.clone(), 5.0, 21, 5.0, 21, gen.dim_z);
        reports.push(validate_assumption_a(&gen, &plan, Tolerance::default())?);
    }
    let coeffs = cfg.coefficients()?;
    let plan = CoefficientSamplePlan::lattice(times, 5.0, 21, coeffs.dim_x);
    reports.push(validate_coefficients(&coeffs, &plan, Tolerance::default())?);
    let verdict = Verdict::from_bool(reports.iter().all(ValidationReport::passed));
    Ok(ValidateReport { reports, verdict })
}

fn run_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulateReport> {
    let coeffs = cfg.coefficients()?;
    let a = anchor(cfg);
    let grid = TimeGrid::new(0.0, cfg.horizon, cfg.n_steps)?;
    let seed = cfg.seed()?;
    let paths = euler_maruyama(
        &coeffs,
        0.0,
        &a.x,
        simulate_brownian(&grid, cfg.n_paths, coeffs.dim_w, seed)?,
    )?;
    let stop = match cfg.c0 {
        Some(c0) => Some(hitting_time(&paths, &a.x, c0, cfg.horizon)?),
        None => None,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let files = vec!["brownian.bin".to_string(), "state.bin".to_string()];
    brownian_columns(&paths).write_file(out_dir.join(&files[0]))?;
    state_columns(&paths)
        .expect("simulated paths carry state")
        .write_file(out_dir.join(&files[1]))?;
    Ok(SimulateReport::from_paths(&paths, stop.as_ref(), files))
}

fn run_solve(cfg: &ExperimentConfig) -> Result<SolveReport> {
    use config::TerminalConfig;
    let gen = cfg.generator()?;
    let coeffs = cfg.coefficients()?;
    let a = anchor(cfg);
    let grid = TimeGrid::new(0.0, cfg.horizon, cfg.n_steps)?;
    let paths = euler_maruyama(
        &coeffs,
        0.0,
        &a.x,
        simulate_brownian(&grid, cfg.n_paths, coeffs.dim_w, cfg.seed()?)?,
    )?;
    let n = cfg.n_steps;
    let terminal_cfg = cfg
        .terminal
        .clone()
        .expect("resolved config has a terminal");
    let terminal: Vec<f64> = match &terminal_cfg {
        TerminalConfig::Constant { value } => vec![*value; cfg.n_paths],
        TerminalConfig::ClippedBrownian { low, high } => {
            if !(low <= high) {
                return Err(LabError::Config(format!(
                    "clip interval [{low}, {high}] is empty"
                )));
            }
            (0..cfg.n_paths)
                .map(|p| paths.brownian_at(p, n)[0].clamp(*low, *high))
                .collect()
        }
        TerminalConfig::LinearState { y, q } => {
            if q.len() != coeffs.dim_x {
                return Err(LabError::Dimension {
                    expected: coeffs.dim_x,
                    got: q.len(),
                    context: "terminal q",
                });
            }
            (0..cfg.n_paths)
                .map(|p| {
                    let xt = paths.state_at(p, n);
                    y + q
                        .iter()
                        .zip(xt.iter().zip(&a.x))
                        .map(|(qi, (u, v))| qi * (u - v))
                        .sum::<f64>()
                })
                .collect()
        }
    };
    let solver = cfg.solver_config()?;
    let sol = solve_bsde(&gen, &terminal, &paths, None, &solver)?;
    let gcfg = cfg.generator.as_ref().expect("resolved");
    let oracle = if gcfg.shift != 0.0 {
        None
    } else {
        match (gcfg.preset.as_str(), &terminal_cfg) {
            ("linear_y", TerminalConfig::Constant { value }) => Some(Estimate::new(
                oracle_linear(gcfg.beta.unwrap_or(1.0), *value, cfg.horizon)?,
                0.0,
            )),
            ("zero", TerminalConfig::Constant { value }) => Some(Estimate::new(*value, 0.0)),
            ("pure_quadratic", _) => Some(oracle_cole_hopf(gcfg.gamma.unwrap_or(1.0), &terminal)?),
            _ => None,
        }
    };
    let y0 = sol.initial_estimate();
    let oracle_ok = oracle.is_none_or(|o| {
        let se = (y0.std_error.powi(2) + o.std_error.powi(2)).sqrt();
        (y0.value - o.value).abs() <= 3.0 * se + cfg.tolerances.oracle_atol
    });
    let bounds: Vec<BoundReport> = vec![check_bound_global(
        &sol,
        &gen,
        &terminal,
        cfg.tolerances.bound_slack,
    )];
    let mut diagnostics: SolverDiagnostics = sol.diagnostics.clone();
    diagnostics.picard_history.clear();
    Ok(SolveReport {
        rows: vec![sol.diagnostics_row(gen.name())],
        y0,
        regression: sol.regression_estimate(),
        oracle,
        diagnostics,
        bounds,
        verdict: Verdict::from_bool(oracle_ok),
    })
}

fn run_approx(cfg: &ExperimentConfig) -> Result<tables::ApproxReport> {
    let a = cfg
        .approx
        .clone()
        .expect("resolved config has an approx block");
    let mut spec = InfConvSpec::by_name(&a.preset, a.dim, a.c)?;
    if let Some(t) = a.refine_tol {
        spec.refine_tol = t;
    }
    if a.n_points == 0 || !(a.x_min <= a.x_max) {
        return Err(LabError::Config(
            "approx grid needs n_points >= 1 and x_min <= x_max".into(),
        ));
    }
    let grid: Vec<Vec<f64>> = (0..a.n_points)
        .map(|i| {
            let s = if a.n_points == 1 {
                a.x_min
            } else {
                a.x_min + (a.x_max - a.x_min) * i as f64 / (a.n_points - 1) as f64
            };
            let mut x = vec![0.0; a.dim];
            x[0] = s;
            x
        })
        .collect();
    let sequence: SequenceReport = approx_sequence_check(&spec, &grid, &a.n_schedule)?;
    let mut localization: Vec<LocalizationReport> = Vec::new();
    if let Some(l) = &a.localization {
        let gen = cfg.generator()?;
        let coeffs = cfg.coefficients()?;
        let m = coeffs.dim_x;
        let x = l.x.clone().unwrap_or_else(|| vec![0.0; m]);
        let q = l.q.clone().unwrap_or_else(|| vec![1.0; m]);
        let ctx = LocalizationContext::new(l.y, x, q, gen.gamma, coeffs.nu)?;
        let probes = probe_lattice(&ctx, gen.dim_z, l.half_width, l.per_axis);
        let zero_b = vec![0.0; gen.dim_z];
        for &n in &l.n_schedule {
            localization.push(generator_localization(
                &gen,
                &ctx,
                &coeffs,
                n,
                0.0,
                &zero_b,
                &probes,
                &LocalizationSettings::default(),
            )?);
        }
    }
    let psi_decreasing = localization
        .windows(2)
        .all(|w| w[1].psi <= w[0].psi + 1e-12);
    let ok =
        sequence.passed() && localization.iter().all(LocalizationReport::passed) && psi_decreasing;
    Ok(tables::ApproxReport {
        sequence,
        localization,
        psi_decreasing,
        verdict: Verdict::from_bool(ok),
    })
}

fn representation_task(cfg: &ExperimentConfig) -> Result<RepresentationTask> {
    let task = RepresentationTask::new(
        cfg.generator()?,
        cfg.coefficients()?,
        anchor(cfg),
        cfg.c0.expect("resolved"),
        cfg.horizon,
        cfg.n_paths,
        cfg.seed()?,
    )?
    .with_schedule(cfg.epsilon_schedule.clone().expect("resolved"))
    .with_mode(cfg.mode.expect("resolved"))
    .with_solver(cfg.solver_config()?)
    .with_n_steps(cfg.n_steps);
    task.validate()?;
    Ok(task)
}

fn run_represent(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let task = representation_task(cfg)?;
    match cfg.command {
        Command::LpSweep => lp_sweep(&task, cfg.p.expect("resolved")),
        _ => epsilon_sweep(&task),
    }
}

fn run_energy(cfg: &ExperimentConfig) -> Result<DecayReport> {
    let a = anchor(cfg);
    let mut task = EnergyTask::new(
        cfg.generator()?,
        cfg.coefficients()?,
        a.x,
        cfg.c0.expect("resolved"),
        cfg.epsilon_schedule.clone().expect("resolved"),
        cfg.n_paths,
        cfg.seed()?,
    );
    task.t = a.t;
    task.solver = cfg.solver_config()?;
    task.n_steps = cfg.n_steps;
    task.atol = cfg.tolerances.energy_atol;
    z_energy_decay(&task)
}

fn run_compare(cfg: &ExperimentConfig) -> Result<GeneratorOrderReport> {
    let mut task = CompareTask::new(
        cfg.generator()?,
        cfg.generator2()?,
        cfg.n_paths,
        cfg.seed()?,
    );
    task.t = anchor(cfg).t;
    task.probes = cfg.probes.clone().expect("resolved");
    task.epsilon_schedule = cfg.epsilon_schedule.clone().expect("resolved");
    task.c0 = cfg.c0.expect("resolved");
    task.horizon = cfg.horizon;
    task.solver = cfg.solver_config()?;
    task.n_steps = cfg.n_steps;
    task.order_tolerance = cfg.tolerances.order;
    converse_compare(&task)
}
