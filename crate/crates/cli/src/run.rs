//! Validation, execution and artifact writing for one invocation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use sap_core::analysis::{
    chirp_direction_comparison, detuning_sweep, freq_shift_scan, phase_average, rabi_error_scan,
    scaled_params, scaling_study, threshold_boundary, FidelityMap, RobustnessScan, ScalingAxis,
};
use sap_core::optimizer::{condition_seed, optimize, reoptimize_per_condition, Problem, Settings};
use sap_core::suture::{
    all_crossing_times, lobes_in_linear_segment, phi_numeric, phi_series, suture_fidelity,
};
use sap_core::{
    AnalysisError, HshParams, PulseError, SapPulse, SapTemplate, SolverError, SolverOptions,
};

use crate::config::{parse_config, AxisChoice, Command, Format, RunConfig};
use crate::emit::{to_json, Cell, Table};

pub const RESULT_CSV: &str = "result.csv";
pub const RESULT_JSON: &str = "result.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("invalid physical input: {0}")]
    Physics(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Physics(_) => 3,
            RunError::Solver(_) => 4,
            RunError::Io { .. } => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            RunError::Schema(_) => "schema",
            RunError::Physics(_) => "physics",
            RunError::Solver(_) => "solver",
            RunError::Io { .. } => "io",
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<PulseError> for RunError {
    fn from(e: PulseError) -> Self {
        RunError::Physics(e.to_string())
    }
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Options(_) => RunError::Schema(e.to_string()),
            SolverError::Pulse(p) => p.into(),
            other => RunError::Solver(other.to_string()),
        }
    }
}

impl From<AnalysisError> for RunError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Grid(m) => RunError::Schema(m),
            AnalysisError::NoCrossing(_) => RunError::Physics(e.to_string()),
            AnalysisError::Solver(s) => s.into(),
            AnalysisError::Pulse(p) => p.into(),
        }
    }
}

/// Command-line inputs of one run.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config_path: PathBuf,
    pub overrides: Vec<String>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A fully validated job; building one performs every physics check.
enum Job {
    Sweep {
        pulse: SapPulse,
        grid: Vec<f64>,
    },
    Scaling {
        base: HshParams,
        template: SapTemplate,
        axis: ScalingAxis,
        values: Vec<f64>,
        grid: Vec<f64>,
    },
    Optimize {
        problem: Problem,
        settings: Settings,
    },
    RabiScan {
        pulse: SapPulse,
        grid: Vec<f64>,
        errors: Vec<f64>,
    },
    ShiftScan {
        template: SapTemplate,
        params: HshParams,
        grid: Vec<f64>,
        shifts: Vec<f64>,
        reoptimize: Option<(Problem, Settings)>,
    },
    ChirpCompare {
        params: HshParams,
        template: SapTemplate,
        grid: Vec<f64>,
    },
    Suture {
        params: HshParams,
        terms: usize,
    },
    PhaseAverage {
        params: HshParams,
        template: SapTemplate,
        detuning: f64,
        samples: usize,
    },
    Boundary {
        problem: Problem,
        settings: Settings,
        axis: AxisChoice,
        values: Vec<f64>,
        widths: Vec<f64>,
    },
}

fn require<'a, T>(block: &'a Option<T>, name: &str, command: Command) -> Result<&'a T, RunError> {
    block
        .as_ref()
        .ok_or_else(|| RunError::Schema(format!("`{}` needs a `{name}` block", command.name())))
}

fn problem_for(
    cfg: &RunConfig,
    solver: SolverOptions,
    command: Command,
) -> Result<(Problem, Settings), RunError> {
    let block = require(&cfg.optimize, "optimize", command)?;
    let problem = Problem {
        fixed: sap_core::optimizer::FixedParams {
            omega_max: cfg.pulse.omega_max,
            edge_duration: cfg.pulse.edge_duration,
            center_duration: cfg.pulse.center_duration()?,
        },
        bounds: block.bounds,
        template: cfg.pulse.template(cfg.seed),
        objective: block.objective.clone(),
        solver,
    };
    problem.validate()?;
    let settings = block.settings.unwrap_or_default();
    if settings.coarse_points == 0 || !(settings.tolerance > 0.0) {
        return Err(RunError::Schema(
            "optimize.settings needs coarse_points >= 1 and a positive tolerance".into(),
        ));
    }
    Ok((problem, settings))
}

fn scaling_axis(a: AxisChoice) -> ScalingAxis {
    match a {
        AxisChoice::Duration => ScalingAxis::Duration,
        AxisChoice::Rabi => ScalingAxis::Rabi,
    }
}

/// Problem for one boundary cell: row value on `axis`, band width `w`.
fn boundary_cell(base: &Problem, axis: AxisChoice, value: f64, w: f64) -> Problem {
    let mut pb = base.clone();
    match axis {
        AxisChoice::Duration => pb.fixed.center_duration = value - 2.0 * pb.fixed.edge_duration,
        AxisChoice::Rabi => pb.fixed.omega_max = value,
    }
    pb.objective.band_width = Some(w);
    pb
}

fn prepare(cfg: &RunConfig) -> Result<Job, RunError> {
    let command = cfg.command.expect("command resolved before prepare");
    let solver = cfg.solver.options()?;
    let template = cfg.pulse.template(cfg.seed);
    let detuning =
        || Ok::<_, RunError>(require(&cfg.detuning, "detuning", command)?.resolve("detuning")?);
    let job = match command {
        Command::Sweep => Job::Sweep {
            pulse: template.build(&cfg.pulse.params()?)?,
            grid: detuning()?,
        },
        Command::Scaling => {
            let block = require(&cfg.scaling, "scaling", command)?;
            let base = cfg.pulse.params()?;
            let axis = scaling_axis(block.axis);
            let values = block.values.resolve("scaling.values")?;
            for &v in &values {
                template.build(&scaled_params(&base, axis, v)?)?;
            }
            Job::Scaling {
                base,
                template,
                axis,
                values,
                grid: detuning()?,
            }
        }
        Command::Optimize => {
            let (problem, settings) = problem_for(cfg, solver, command)?;
            Job::Optimize { problem, settings }
        }
        Command::RobustnessRabi => {
            let errors =
                require(&cfg.rabi_errors, "rabi_errors", command)?.resolve("rabi_errors")?;
            if let Some(e) = errors.iter().find(|&&e| e <= -1.0) {
                return Err(PulseError::RabiError(*e).into());
            }
            Job::RabiScan {
                pulse: template.build(&cfg.pulse.params()?)?,
                grid: detuning()?,
                errors,
            }
        }
        Command::RobustnessShift => {
            let shifts = require(&cfg.shifts, "shifts", command)?.resolve("shifts")?;
            let params = cfg.pulse.params()?;
            let reoptimize = if cfg.reoptimize {
                let (problem, settings) = problem_for(cfg, solver, command)?;
                for &s in &shifts {
                    let mut pb = problem.clone();
                    pb.template.delta_f = s;
                    pb.validate()?;
                }
                Some((problem, settings))
            } else {
                None
            };
            for &s in &shifts {
                template.clone().with_delta_f(s).build(&params)?;
            }
            Job::ShiftScan {
                template,
                params,
                grid: detuning()?,
                shifts,
                reoptimize,
            }
        }
        Command::ChirpCompare => {
            if template.n_components != 2 {
                return Err(RunError::Schema(format!(
                    "chirp-compare needs pulse.n_components = 2, got {}",
                    template.n_components
                )));
            }
            let params = cfg.pulse.params()?;
            template.build(&params)?;
            Job::ChirpCompare {
                params,
                template,
                grid: detuning()?,
            }
        }
        Command::Suture => {
            let terms = require(&cfg.suture, "suture", command)?.terms;
            if terms < 2 {
                return Err(RunError::Schema(format!(
                    "suture.terms must be >= 2, got {terms}"
                )));
            }
            Job::Suture {
                params: cfg.pulse.params()?,
                terms,
            }
        }
        Command::PhaseAverage => {
            let block = require(&cfg.phase_average, "phase_average", command)?;
            if block.samples < 2 || !block.detuning.is_finite() {
                return Err(RunError::Schema(
                    "phase_average needs samples >= 2 and a finite detuning".into(),
                ));
            }
            let params = cfg.pulse.params()?;
            template.build(&params)?;
            Job::PhaseAverage {
                params,
                template,
                detuning: block.detuning,
                samples: block.samples,
            }
        }
        Command::Boundary => {
            let block = require(&cfg.boundary, "boundary", command)?;
            let (problem, settings) = problem_for(cfg, solver, command)?;
            let values = block.values.resolve("boundary.values")?;
            let widths = block.widths.resolve("boundary.widths")?;
            for &v in &values {
                for &w in &widths {
                    let pb = boundary_cell(&problem, block.axis, v, w);
                    if pb.fixed.center_duration <= 0.0 {
                        return Err(PulseError::DurationTooShort {
                            total: v,
                            edge: pb.fixed.edge_duration,
                        }
                        .into());
                    }
                    pb.validate()?;
                }
            }
            Job::Boundary {
                problem,
                settings,
                axis: block.axis,
                values,
                widths,
            }
        }
    };
    Ok(job)
}

/// Data of a finished job.
struct Artifacts {
    table: Table,
    json: String,
    failures: usize,
}

fn json_of<T: Serialize + ?Sized>(v: &T) -> Result<String, RunError> {
    to_json(v).map_err(|e| RunError::Schema(format!("serialization failed: {e}")))
}

fn single_row_table(map: &FidelityMap) -> Table {
    let mut t = Table::new(vec!["delta_rad_per_us", "fidelity"]);
    for (d, v) in map.detuning_grid.iter().zip(&map.values[0]) {
        t.push(vec![Cell::from(*d), Cell::from(*v)]);
    }
    t
}

fn stacked_table(map: &FidelityMap) -> Table {
    let axis = map
        .secondary
        .as_ref()
        .expect("stacked map has a secondary axis");
    let mut t = Table::new(vec![axis.kind.label(), "delta_rad_per_us", "fidelity"]);
    for (a, row) in axis.values.iter().zip(&map.values) {
        for (d, v) in map.detuning_grid.iter().zip(row) {
            t.push(vec![Cell::from(*a), Cell::from(*d), Cell::from(*v)]);
        }
    }
    t
}

fn scan_artifacts(scan: &RobustnessScan) -> Result<Artifacts, RunError> {
    Ok(Artifacts {
        table: stacked_table(&scan.map),
        json: json_of(scan)?,
        failures: scan.map.failures,
    })
}

fn run_job(job: Job, solver: SolverOptions, seed: u64) -> Result<Artifacts, RunError> {
    match job {
        Job::Sweep { pulse, grid } => {
            let map = detuning_sweep(&pulse, &grid, &solver)?;
            Ok(Artifacts {
                table: single_row_table(&map),
                json: json_of(&map)?,
                failures: map.failures,
            })
        }
        Job::Scaling {
            base,
            template,
            axis,
            values,
            grid,
        } => {
            let study = scaling_study(&base, &template, axis, &values, &grid, &solver)?;
            Ok(Artifacts {
                table: stacked_table(&study.map),
                json: json_of(&study)?,
                failures: study.map.failures,
            })
        }
        Job::Optimize { problem, settings } => {
            let res = optimize(&problem, &settings, seed)?;
            let mut t = Table::new(vec![
                "step",
                "edge_shape_us",
                "edge_rate_rad_per_us",
                "linear_rate_rad_per_us",
                "objective",
            ]);
            for (i, tp) in res.trace.iter().enumerate() {
                t.push(vec![
                    Cell::from(i),
                    Cell::from(tp.params.edge_shape),
                    Cell::from(tp.params.edge_rate),
                    Cell::from(tp.params.linear_rate),
                    Cell::from(tp.value),
                ]);
            }
            Ok(Artifacts {
                table: t,
                json: json_of(&json!({ "problem": problem, "settings": settings, "result": res }))?,
                failures: 0,
            })
        }
        Job::RabiScan {
            pulse,
            grid,
            errors,
        } => scan_artifacts(&rabi_error_scan(&pulse, &grid, &errors, &solver)?),
        Job::ShiftScan {
            template,
            params,
            grid,
            shifts,
            reoptimize,
        } => {
            let profiles: Vec<HshParams> = match reoptimize {
                None => vec![params; shifts.len()],
                Some((problem, settings)) => reoptimize_per_condition(
                    &problem,
                    &shifts,
                    |pb, s| {
                        let mut pb = pb.clone();
                        pb.template.delta_f = s;
                        pb
                    },
                    &settings,
                    seed,
                )
                .into_iter()
                .map(|r| r.map(|r| r.best_params))
                .collect::<Result<_, _>>()?,
            };
            let scan = freq_shift_scan(&template, &grid, &shifts, |i, _| Ok(profiles[i]), &solver)?;
            scan_artifacts(&scan)
        }
        Job::ChirpCompare {
            params,
            template,
            grid,
        } => {
            let cmp = chirp_direction_comparison(&params, &template, &grid, &solver)?;
            let mut t = Table::new(vec![
                "delta_rad_per_us",
                "fidelity_opposite",
                "fidelity_same",
            ]);
            for (i, d) in grid.iter().enumerate() {
                t.push(vec![
                    Cell::from(*d),
                    Cell::from(cmp.opposite.values[0][i]),
                    Cell::from(cmp.same.values[0][i]),
                ]);
            }
            Ok(Artifacts {
                table: t,
                json: json_of(&cmp)?,
                failures: cmp.opposite.failures + cmp.same.failures,
            })
        }
        Job::Suture { params, terms } => {
            let series = phi_series(&params, terms)?;
            let phi = phi_numeric(&params, params.duration())?;
            let fidelity = suture_fidelity(&params)?;
            let mut t = Table::new(vec!["k", "term_rad", "partial_sum_rad"]);
            t.push(vec![
                Cell::from(0usize),
                Cell::Missing,
                Cell::from(series.partial_sums[0]),
            ]);
            for (k, (term, sum)) in series
                .terms
                .iter()
                .zip(&series.partial_sums[1..])
                .enumerate()
            {
                t.push(vec![Cell::from(k + 1), Cell::from(*term), Cell::from(*sum)]);
            }
            let json = json_of(&json!({
                "params": params,
                "series": series,
                "series_limit": series.limit(),
                "lobes_in_linear_segment": lobes_in_linear_segment(&series, &params),
                "crossing_times_us": all_crossing_times(&params),
                "phi_numeric_rad": phi,
                "suture_fidelity": fidelity,
            }))?;
            Ok(Artifacts {
                table: t,
                json,
                failures: 0,
            })
        }
        Job::PhaseAverage {
            params,
            template,
            detuning,
            samples,
        } => {
            let avg = phase_average(&params, &template, detuning, samples, seed, &solver)?;
            let mut t = Table::new(vec!["mean_fidelity", "std_fidelity", "samples"]);
            t.push(vec![
                Cell::from(avg.mean),
                Cell::from(avg.std),
                Cell::from(avg.samples),
            ]);
            Ok(Artifacts {
                table: t,
                json: json_of(
                    &json!({ "params": params, "template": template, "detuning": detuning, "seed": seed, "average": avg }),
                )?,
                failures: 0,
            })
        }
        Job::Boundary {
            problem,
            settings,
            axis,
            values,
            widths,
        } => {
            let index = |a: f64, w: f64| {
                let i = values.iter().position(|&x| x == a).unwrap_or(0);
                let j = widths.iter().position(|&x| x == w).unwrap_or(0);
                i * widths.len() + j
            };
            let b = threshold_boundary(
                &values,
                &widths,
                |a, w| {
                    let pb = boundary_cell(&problem, axis, a, w);
                    Ok(optimize(&pb, &settings, condition_seed(seed, index(a, w)))?.best_value)
                },
                problem.objective.threshold,
            );
            let label = match axis {
                AxisChoice::Duration => "duration_us",
                AxisChoice::Rabi => "rabi_rad_per_us",
            };
            let mut t = Table::new(vec!["bandwidth_rad_per_us", label]);
            for (v, w) in values.iter().zip(&b.boundary) {
                t.push(vec![Cell::from(*w), Cell::from(*v)]);
            }
            let failures = b.values.iter().flatten().filter(|v| v.is_none()).count();
            Ok(Artifacts {
                table: t,
                json: json_of(
                    &json!({ "axis": label, "objective": problem.objective, "boundary": b }),
                )?,
                failures,
            })
        }
    }
}

#[derive(Serialize)]
struct OutputDigest {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct ErrorReport {
    category: &'static str,
    exit_code: i32,
    message: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    status: &'static str,
    config_path: String,
    overrides: Vec<String>,
    workers: Option<usize>,
    /// Effective configuration after overrides and flags.
    config: Value,
    wall_clock_seconds: f64,
    failures: usize,
    outputs: Vec<OutputDigest>,
    error: Option<ErrorReport>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

/// Loads and validates the configuration; CLI flags win over the file.
fn load(inv: &Invocation) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(&inv.config_path)
        .map_err(|e| RunError::Schema(format!("cannot read {}: {e}", inv.config_path.display())))?;
    let mut cfg = parse_config(&text, &inv.overrides)?;
    match cfg.command {
        Some(c) if c != inv.command => {
            return Err(RunError::Schema(format!(
                "config is for `{}` but `{}` was requested",
                c.name(),
                inv.command.name()
            )))
        }
        _ => cfg.command = Some(inv.command),
    }
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &inv.out {
        cfg.output.dir = Some(out.clone());
    }
    if cfg.output.formats.is_empty() {
        return Err(RunError::Schema(
            "output.formats must name at least one format".into(),
        ));
    }
    Ok(cfg)
}

fn execute_validated(cfg: &RunConfig, workers: Option<usize>) -> Result<Artifacts, RunError> {
    let job = prepare(cfg)?;
    let solver = cfg.solver.options()?;
    let seed = cfg.seed;
    match workers {
        None => run_job(job, solver, seed),
        Some(0) => Err(RunError::Schema("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Schema(format!("cannot start {n} workers: {e}")))?
            .install(|| run_job(job, solver, seed)),
    }
}

/// Output directory for the manifest, even when the config did not parse.
fn fallback_dir(inv: &Invocation) -> PathBuf {
    inv.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

/// Runs one invocation end to end and returns the process exit code.
///
/// Data files are written only after the job succeeds; a failed run removes
/// stale data files and leaves an error manifest.
pub fn run(inv: &Invocation) -> Result<i32, RunError> {
    let start = Instant::now();
    let loaded = load(inv);
    let (dir, snapshot) = match &loaded {
        Ok(cfg) => (
            cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from(".")),
            serde_json::to_value(cfg).unwrap_or(Value::Null),
        ),
        Err(_) => (fallback_dir(inv), Value::Null),
    };
    let outcome = loaded.and_then(|cfg| {
        let arts = execute_validated(&cfg, inv.workers)?;
        Ok((cfg, arts))
    });
    fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;

    let mut manifest = Manifest {
        tool: "sap",
        version: env!("CARGO_PKG_VERSION"),
        command: inv.command.name(),
        status: "ok",
        config_path: inv.config_path.display().to_string(),
        overrides: inv.overrides.clone(),
        workers: inv.workers,
        config: snapshot,
        wall_clock_seconds: 0.0,
        failures: 0,
        outputs: Vec::new(),
        error: None,
    };
    let code = match outcome {
        Ok((cfg, arts)) => {
            for format in &cfg.output.formats {
                let (name, body) = match format {
                    Format::Csv => (RESULT_CSV, arts.table.to_csv()),
                    Format::Json => (RESULT_JSON, arts.json.clone()),
                };
                write_file(&dir.join(name), &body)?;
                manifest.outputs.push(OutputDigest {
                    file: name.to_string(),
                    sha256: hex::encode(Sha256::digest(body.as_bytes())),
                });
            }
            manifest.failures = arts.failures;
            0
        }
        Err(e) => {
            for name in [RESULT_CSV, RESULT_JSON] {
                let p = dir.join(name);
                if p.exists() {
                    fs::remove_file(&p).map_err(|err| RunError::io(&p, err))?;
                }
            }
            manifest.status = "error";
            manifest.error = Some(ErrorReport {
                category: e.category(),
                exit_code: e.exit_code(),
                message: e.to_string(),
            });
            eprintln!("sap: {e}");
            e.exit_code()
        }
    };
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    let body = json_of(&manifest)?;
    write_file(&dir.join(MANIFEST), &body)?;
    Ok(code)
}
