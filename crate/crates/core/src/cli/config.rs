//! JSON experiment configuration.
//!
//! Every optional knob is filled in by [`ExperimentConfig::resolve`], and the
//! resolved document is what reports embed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bsde::{Basis, Regressors, Scheme, SolverConfig};
use crate::comparison::Probe;
use crate::error::{LabError, Result};
use crate::model::presets::{self, MixedParams};
use crate::model::{GeneratorSpec, SdeCoefficients};
use crate::representation::ErrorMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Simulate,
    Solve,
    Approx,
    Represent,
    LpSweep,
    ZEnergy,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Solve => "solve",
            Command::Approx => "approx",
            Command::Represent => "represent",
            Command::LpSweep => "lp-sweep",
            Command::ZEnergy => "z-energy",
            Command::Compare => "compare",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub preset: String,
    #[serde(default = "one")]
    pub dim_z: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_coef: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed: Option<MixedParams>,
    /// Constant added to the driver.
    #[serde(default)]
    pub shift: f64,
}

impl GeneratorConfig {
    fn resolve(&mut self) -> Result<()> {
        match self.preset.as_str() {
            "zero" => {}
            "linear_y" => {
                self.beta.get_or_insert(1.0);
            }
            "pure_quadratic" => {
                self.gamma.get_or_insert(1.0);
            }
            "constant" => {
                self.c.get_or_insert(1.0);
            }
            "affine" => {
                self.intercept.get_or_insert(0.0);
                self.slope_y.get_or_insert(0.0);
                let d = self.dim_z;
                self.z_coef.get_or_insert_with(|| vec![0.0; d]);
            }
            "mixed" => {
                self.mixed.get_or_insert_with(MixedParams::default);
            }
            other => {
                return Err(LabError::Config(format!(
                    "unknown generator preset '{other}'"
                )))
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<GeneratorSpec> {
        let d = self.dim_z;
        let gen = match self.preset.as_str() {
            "zero" => presets::zero(d),
            "linear_y" => presets::linear_y(self.beta.unwrap_or(1.0), d)?,
            "pure_quadratic" => presets::pure_quadratic(self.gamma.unwrap_or(1.0), d)?,
            "constant" => presets::constant(self.c.unwrap_or(1.0), d)?,
            "affine" => presets::affine(
                self.intercept.unwrap_or(0.0),
                self.slope_y.unwrap_or(0.0),
                self.z_coef.clone().unwrap_or_else(|| vec![0.0; d]),
            )?,
            "mixed" => presets::mixed(&self.mixed.clone().unwrap_or_default())?,
            other => {
                return Err(LabError::Config(format!(
                    "unknown generator preset '{other}'"
                )))
            }
        };
        Ok(if self.shift != 0.0 {
            gen.shifted(self.shift)
        } else {
            gen
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl CoefficientsConfig {
    pub fn brownian(dim: usize) -> Self {
        Self {
            preset: "brownian".into(),
            dim: Some(dim),
            b0: None,
            theta: None,
            eta: None,
            slope: None,
            mu: None,
            nu: None,
        }
    }

    fn need<T: Clone>(&self, v: &Option<T>, field: &str) -> Result<T> {
        v.clone().ok_or_else(|| {
            LabError::Config(format!(
                "coefficients preset '{}' needs '{field}'",
                self.preset
            ))
        })
    }

    pub fn build(&self) -> Result<SdeCoefficients> {
        let dim = self.dim.unwrap_or(1);
        match self.preset.as_str() {
            "brownian" => Ok(SdeCoefficients::brownian(dim)),
            "constant_drift" => SdeCoefficients::constant_drift(self.need(&self.b0, "b0")?),
            "frozen" => SdeCoefficients::frozen(dim, dim),
            "deterministic_drift" => {
                SdeCoefficients::deterministic_drift(self.need(&self.b0, "b0")?, dim)
            }
            "geometric" => SdeCoefficients::geometric(
                self.need(&self.theta, "theta")?,
                self.need(&self.eta, "eta")?,
            ),
            "sine_drift" => Ok(SdeCoefficients::sine_drift()),
            "linear_drift" => SdeCoefficients::linear_drift(
                self.need(&self.slope, "slope")?,
                self.need(&self.mu, "mu")?,
                self.need(&self.nu, "nu")?,
            ),
            other => Err(LabError::Config(format!(
                "unknown coefficients preset '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    #[serde(default)]
    pub t: f64,
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub y: f64,
    pub q: Option<Vec<f64>>,
}

/// Terminal values for `solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    Constant {
        value: f64,
    },
    /// `clip(B_T, low, high)` on the first Brownian component.
    ClippedBrownian {
        low: f64,
        high: f64,
    },
    /// `y + q.(X_T - x)`.
    LinearState {
        y: f64,
        q: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub basis: Option<Basis>,
    pub regressors: Option<Regressors>,
    pub picard_max: Option<usize>,
    pub picard_tol: Option<f64>,
    pub z_clip: Option<f64>,
    pub scheme: Option<Scheme>,
}

impl SolverOverrides {
    pub fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(b) = self.basis {
            cfg.basis = b;
        }
        if let Some(r) = self.regressors {
            cfg.regressors = r;
        }
        if let Some(v) = self.picard_max {
            cfg.picard_max = v;
        }
        if let Some(v) = self.picard_tol {
            cfg.picard_tol = v;
        }
        if let Some(v) = self.z_clip {
            cfg.z_clip = v;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        cfg
    }

    fn fill(&mut self, cfg: &SolverConfig) {
        let full = self.apply(cfg.clone());
        *self = SolverOverrides {
            basis: Some(full.basis),
            regressors: Some(full.regressors),
            picard_max: Some(full.picard_max),
            picard_tol: Some(full.picard_tol),
            z_clip: Some(full.z_clip),
            scheme: Some(full.scheme),
        };
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    #[serde(default)]
    pub y: f64,
    pub x: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    #[serde(default = "default_loc_schedule")]
    pub n_schedule: Vec<usize>,
    #[serde(default = "one_f")]
    pub half_width: f64,
    #[serde(default = "ten")]
    pub per_axis: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    #[serde(default = "square")]
    pub preset: String,
    #[serde(default = "one")]
    pub dim: usize,
    /// Value of the `constant` preset.
    #[serde(default = "one_f")]
    pub c: f64,
    #[serde(default = "minus_five")]
    pub x_min: f64,
    #[serde(default = "five")]
    pub x_max: f64,
    #[serde(default = "hundred_one")]
    pub n_points: usize,
    #[serde(default = "default_n_schedule")]
    pub n_schedule: Vec<usize>,
    pub refine_tol: Option<f64>,
    pub localization: Option<LocalizationConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Slack on `Y1 - Y2 >= 0` in the comparison hypothesis check.
    #[serde(default = "order_tol")]
    pub order: f64,
    /// Relative slack of the a-priori bounds.
    #[serde(default = "bound_slack")]
    pub bound_slack: f64,
    /// Ceiling on the last scaled `Z` energy.
    #[serde(default = "energy_atol")]
    pub energy_atol: f64,
    /// Allowed bias between `solve` and an oracle, beyond three standard errors.
    #[serde(default = "oracle_atol")]
    pub oracle_atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            order: order_tol(),
            bound_slack: bound_slack(),
            energy_atol: energy_atol(),
            oracle_atol: oracle_atol(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// File name of the CSV table, relative to the output directory.
    pub csv: Option<String>,
    pub json: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub generator: Option<GeneratorConfig>,
    /// Second generator of `compare`.
    pub generator2: Option<GeneratorConfig>,
    pub coefficients: Option<CoefficientsConfig>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "one_f")]
    pub horizon: f64,
    pub anchor: Option<AnchorConfig>,
    pub c0: Option<f64>,
    pub epsilon_schedule: Option<Vec<f64>>,
    pub mode: Option<ErrorMode>,
    /// Exponent of `lp-sweep`.
    pub p: Option<f64>,
    #[serde(default)]
    pub solver: SolverOverrides,
    pub terminal: Option<TerminalConfig>,
    pub approx: Option<ApproxConfig>,
    pub probes: Option<Vec<Probe>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn ten() -> usize {
    10
}
fn five() -> f64 {
    5.0
}
fn minus_five() -> f64 {
    -5.0
}
fn hundred_one() -> usize {
    101
}
fn square() -> String {
    "square".into()
}
fn default_n_schedule() -> Vec<usize> {
    (0..=8).map(|k| 1usize << k).collect()
}
fn default_loc_schedule() -> Vec<usize> {
    vec![8, 32, 128]
}
fn default_paths() -> usize {
    10_000
}
fn default_steps() -> usize {
    64
}
fn order_tol() -> f64 {
    1e-8
}
fn bound_slack() -> f64 {
    1e-9
}
fn energy_atol() -> f64 {
    1e-2
}
fn oracle_atol() -> f64 {
    5e-3
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| LabError::Config("seed required".into()))
    }

    pub fn generator(&self) -> Result<GeneratorSpec> {
        self.generator
            .as_ref()
            .ok_or_else(|| {
                LabError::Config(format!("'{}' needs a generator", self.command.name()))
            })?
            .build()
    }

    pub fn generator2(&self) -> Result<GeneratorSpec> {
        self.generator2
            .as_ref()
            .ok_or_else(|| LabError::Config("'compare' needs generator2".into()))?
            .build()
    }

    pub fn coefficients(&self) -> Result<SdeCoefficients> {
        match &self.coefficients {
            Some(c) => c.build(),
            None => Ok(SdeCoefficients::brownian(
                self.generator.as_ref().map_or(1, |g| g.dim_z),
            )),
        }
    }

    /// Fill every default the command uses and check what can be checked
    /// without running anything.
    pub fn resolve(&mut self) -> Result<()> {
        self.seed()?;
        for g in [&mut self.generator, &mut self.generator2]
            .into_iter()
            .flatten()
        {
            g.resolve()?;
        }
        let needs_gen = !matches!(self.command, Command::Simulate | Command::Approx);
        if needs_gen && self.generator.is_none() {
            return Err(LabError::Config(format!(
                "'{}' needs a generator",
                self.command.name()
            )));
        }
        if self.command == Command::Compare && self.generator2.is_none() {
            return Err(LabError::Config("'compare' needs generator2".into()));
        }
        if self.n_paths < 2 || self.n_steps == 0 {
            return Err(LabError::Config(
                "need n_paths >= 2 and n_steps >= 1".into(),
            ));
        }
        if !(self.horizon > 0.0) {
            return Err(LabError::Config(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        let dim = self.generator.as_ref().map_or(1, |g| g.dim_z);
        if self.coefficients.is_none() && self.command != Command::Approx {
            self.coefficients = Some(CoefficientsConfig::brownian(dim));
        }
        let coeffs = if self.command == Command::Approx {
            None
        } else {
            Some(self.coefficients()?)
        };
        let m = coeffs.as_ref().map_or(dim, |c| c.dim_x);

        let anchor = self.anchor.get_or_insert(AnchorConfig {
            t: 0.0,
            x: None,
            y: 0.0,
            q: None,
        });
        anchor.x.get_or_insert_with(|| vec![0.0; m]);
        anchor.q.get_or_insert_with(|| vec![1.0; m]);
        let t = anchor.t;

        match self.command {
            Command::Represent | Command::LpSweep | Command::Compare => {
                self.c0.get_or_insert(10.0);
                let room = self.horizon - t;
                self.epsilon_schedule
                    .get_or_insert_with(|| crate::representation::default_schedule(room));
            }
            Command::ZEnergy => {
                self.c0.get_or_insert(10.0);
                self.epsilon_schedule
                    .get_or_insert_with(|| vec![0.2, 0.1, 0.05, 0.025]);
            }
            _ => {}
        }
        match self.command {
            Command::Represent => {
                self.mode.get_or_insert(ErrorMode::L1);
            }
            Command::LpSweep => {
                let p = *self.p.get_or_insert(2.0);
                self.mode = Some(ErrorMode::Lp { p });
            }
            Command::Compare => {
                self.probes
                    .get_or_insert_with(|| crate::comparison::default_probes(dim));
            }
            Command::Solve => {
                self.terminal
                    .get_or_insert(TerminalConfig::Constant { value: 1.0 });
            }
            Command::Approx => {
                let a = self.approx.get_or_insert_with(|| {
                    serde_json::from_str("{}").expect("approx defaults deserialize")
                });
                if !matches!(a.preset.as_str(), "square" | "abs" | "constant") {
                    return Err(LabError::Config(format!(
                        "unknown inf-convolution preset '{}'",
                        a.preset
                    )));
                }
                a.refine_tol.get_or_insert(1e-8);
            }
            _ => {}
        }
        if needs_gen {
            let gen = self.generator()?;
            let mut base = SolverConfig::for_generator(&gen);
            if self.command == Command::Compare {
                base.z_clip = base
                    .z_clip
                    .max(SolverConfig::for_generator(&self.generator2()?).z_clip);
            }
            if matches!(self.command, Command::Represent | Command::LpSweep) && t > 0.0 {
                base.regressors = Regressors::StateAndBrownian;
            }
            self.solver.fill(&base);
        }
        Ok(())
    }

    /// Solver configuration after [`Self::resolve`].
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let gen = self.generator()?;
        Ok(self.solver.apply(SolverConfig::for_generator(&gen)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_is_reported() {
        let mut cfg = ExperimentConfig::from_json(
            r#"{"command": "represent", "generator": {"preset": "zero"}}"#,
        )
        .unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("seed required"), "{err}");
    }

    #[test]
    fn unknown_preset_and_unknown_field_differ() {
        let mut cfg = ExperimentConfig::from_json(
            r#"{"command": "solve", "seed": 1, "generator": {"preset": "cubic"}}"#,
        )
        .unwrap();
        assert!(cfg
            .resolve()
            .unwrap_err()
            .to_string()
            .contains("unknown generator preset"));
        let err = ExperimentConfig::from_json(r#"{"command": "solve", "seed": 1, "colour": 3}"#)
            .unwrap_err();
        assert!(err.to_string().contains("malformed config"), "{err}");
    }

    #[test]
    fn resolution_fills_defaults_and_is_idempotent() {
        let mut cfg = ExperimentConfig::from_json(
            r#"{"command": "represent", "seed": 7, "generator": {"preset": "pure_quadratic"}}"#,
        )
        .unwrap();
        cfg.resolve().unwrap();
        assert_eq!(cfg.generator.as_ref().unwrap().gamma, Some(1.0));
        assert_eq!(cfg.epsilon_schedule.as_ref().unwrap().len(), 6);
        assert_eq!(cfg.solver.picard_max, Some(100));
        let text = serde_json::to_string(&cfg).unwrap();
        let mut again = ExperimentConfig::from_json(&text).unwrap();
        again.resolve().unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn lp_sweep_sets_mode() {
        let mut cfg = ExperimentConfig::from_json(
            r#"{"command": "lp-sweep", "seed": 7, "p": 0.5, "generator": {"preset": "pure_quadratic"}}"#,
        )
        .unwrap();
        cfg.resolve().unwrap();
        assert_eq!(cfg.mode, Some(ErrorMode::Lp { p: 0.5 }));
    }
}
