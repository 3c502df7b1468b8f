//! Run configuration: a JSON document plus dotted-key overrides.

use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sap_core::analysis::uniform_grid;
use sap_core::optimizer::{Bounds, Objective, Settings};
use sap_core::{HshParams, Method, PhasePolicy, SapTemplate, SolverOptions};

use crate::run::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sweep,
    Scaling,
    Optimize,
    RobustnessRabi,
    RobustnessShift,
    ChirpCompare,
    Suture,
    PhaseAverage,
    Boundary,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Scaling => "scaling",
            Command::Optimize => "optimize",
            Command::RobustnessRabi => "robustness-rabi",
            Command::RobustnessShift => "robustness-shift",
            Command::ChirpCompare => "chirp-compare",
            Command::Suture => "suture",
            Command::PhaseAverage => "phase-average",
            Command::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", deny_unknown_fields)]
pub enum PhaseBlock {
    Zero,
    Fixed {
        values: Vec<f64>,
    },
    /// Without a seed the run seed is used.
    Random {
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl Default for PhaseBlock {
    fn default() -> Self {
        PhaseBlock::Zero
    }
}

fn default_components() -> usize {
    1
}

fn default_attenuation() -> f64 {
    0.95
}

/// HSH profile and tone layout. Give exactly one of `center_duration` and
/// `total_duration`; the searched parameters may be omitted for `optimize`
/// and `boundary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    pub omega_max: f64,
    #[serde(default)]
    pub edge_shape: Option<f64>,
    #[serde(default)]
    pub edge_rate: Option<f64>,
    #[serde(default)]
    pub linear_rate: Option<f64>,
    pub edge_duration: f64,
    #[serde(default)]
    pub center_duration: Option<f64>,
    #[serde(default)]
    pub total_duration: Option<f64>,
    #[serde(default = "default_components")]
    pub n_components: usize,
    #[serde(default = "default_attenuation")]
    pub attenuation: f64,
    #[serde(default)]
    pub delta_f: f64,
    #[serde(default)]
    pub same_chirp: bool,
    #[serde(default)]
    pub phases: PhaseBlock,
}

impl PulseBlock {
    /// Linear-segment duration t₂, derived from τ when given that way.
    pub fn center_duration(&self) -> Result<f64, RunError> {
        match (self.center_duration, self.total_duration) {
            (Some(t2), None) => Ok(t2),
            (None, Some(total)) => {
                if total <= 2.0 * self.edge_duration {
                    return Err(RunError::Physics(format!(
                        "total duration {total} is shorter than two edges of {}",
                        self.edge_duration
                    )));
                }
                Ok(total - 2.0 * self.edge_duration)
            }
            (Some(_), Some(_)) => Err(RunError::Schema(
                "pulse: give center_duration or total_duration, not both".into(),
            )),
            (None, None) => Err(RunError::Schema(
                "pulse: center_duration or total_duration is required".into(),
            )),
        }
    }

    pub fn params(&self) -> Result<HshParams, RunError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| RunError::Schema(format!("pulse.{name} is required for this command")))
        };
        Ok(HshParams::new(
            self.omega_max,
            need(self.edge_shape, "edge_shape")?,
            need(self.edge_rate, "edge_rate")?,
            need(self.linear_rate, "linear_rate")?,
            self.edge_duration,
            self.center_duration()?,
        )?)
    }

    pub fn template(&self, run_seed: u64) -> SapTemplate {
        let phases = match &self.phases {
            PhaseBlock::Zero => PhasePolicy::Zero,
            PhaseBlock::Fixed { values } => PhasePolicy::Fixed(values.clone()),
            PhaseBlock::Random { seed } => PhasePolicy::Random {
                seed: seed.unwrap_or(run_seed),
            },
        };
        SapTemplate {
            n_components: self.n_components,
            attenuation: self.attenuation,
            phases,
            delta_f: self.delta_f,
            same_chirp: self.same_chirp,
        }
    }
}

/// Either explicit `values` or `points` evenly spaced on [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl GridBlock {
    pub fn resolve(&self, name: &str) -> Result<Vec<f64>, RunError> {
        let grid = match (self.values.as_ref(), self.lo, self.hi, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(n))
                if n >= 1 && lo.is_finite() && hi.is_finite() && lo <= hi =>
            {
                uniform_grid(lo, hi, n)
            }
            _ => {
                return Err(RunError::Schema(format!(
                    "{name}: give either values or finite lo <= hi with points >= 1"
                )))
            }
        };
        if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
            return Err(RunError::Schema(format!(
                "{name}: grid must be non-empty and finite"
            )));
        }
        Ok(grid)
    }
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub max_step: Option<f64>,
    /// Switches to fixed-step RK4 with this many steps.
    #[serde(default)]
    pub fixed_steps: Option<usize>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            max_step: None,
            fixed_steps: None,
        }
    }
}

impl SolverBlock {
    pub fn options(&self) -> Result<SolverOptions, RunError> {
        let opts = SolverOptions {
            rel_tol: self.tolerance,
            abs_tol: self.tolerance,
            max_step: self.max_step,
            method: self
                .fixed_steps
                .map_or(Method::Adaptive, |steps| Method::FixedRk4 { steps }),
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisChoice {
    Duration,
    Rabi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBlock {
    pub axis: AxisChoice,
    pub values: GridBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeBlock {
    pub bounds: Bounds,
    pub objective: Objective,
    #[serde(default)]
    pub settings: Option<Settings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SutureBlock {
    pub terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseAverageBlock {
    pub detuning: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryBlock {
    /// Row axis; the column axis is always the band width W.
    pub axis: AxisChoice,
    pub values: GridBlock,
    pub widths: GridBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: None,
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the command given on the command line when present.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    pub pulse: PulseBlock,
    #[serde(default)]
    pub detuning: Option<GridBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub scaling: Option<ScalingBlock>,
    #[serde(default)]
    pub rabi_errors: Option<GridBlock>,
    #[serde(default)]
    pub shifts: Option<GridBlock>,
    /// Re-optimize the profile per shift in `robustness-shift`.
    #[serde(default)]
    pub reoptimize: bool,
    #[serde(default)]
    pub optimize: Option<OptimizeBlock>,
    #[serde(default)]
    pub suture: Option<SutureBlock>,
    #[serde(default)]
    pub phase_average: Option<PhaseAverageBlock>,
    #[serde(default)]
    pub boundary: Option<BoundaryBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Sets `path` (dot-separated) in `doc` to `raw`, read as JSON when it
/// parses and as a string otherwise. Missing objects along the path are
/// created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), RunError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Schema(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(RunError::Schema(format!(
            "override key {path:?} has an empty segment"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            RunError::Schema(format!("override {path:?} descends into a non-object"))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    node.as_object_mut()
        .ok_or_else(|| RunError::Schema(format!("override {path:?} descends into a non-object")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Parses a config document, applies overrides in order and deserializes.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, RunError> {
    let mut doc: Value = serde_json::from_str(text)
        .map_err(|e| RunError::Schema(format!("config is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    serde_json::from_value(doc).map_err(|e| RunError::Schema(e.to_string()))
}
