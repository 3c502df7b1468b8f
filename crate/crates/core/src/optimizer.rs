//! Derivative-free optimization of the edge shape T, edge rate r and linear
//! rate r₁ with Ω, t₁ and t₂ held fixed.
//!
//! Two stages: a log-spaced grid scan over the bounds box, then a bounded
//! Nelder–Mead simplex started at the best scan point. Everything maximizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{band_average, bandwidth_at_threshold, uniform_grid};
use crate::dynamics::{transfer_fidelity, SolverOptions};
use crate::error::AnalysisError;
use crate::pulse::{random_phases, HshParams, PhasePolicy, SapPulse, SapTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Worst fidelity over the suture points of the pulse.
    SuturePoint,
    /// Trapezoidal mean fidelity over the band.
    BandAverage,
    /// Width of the F ≥ threshold interval around band center.
    BandwidthAtThreshold,
    /// Band average, further averaged over random tone phases.
    PhaseAveragedBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub kind: ObjectiveKind,
    /// Target band W = n·f. When set, r₁ is derived from (T, r) so that the
    /// chirp span equals W/n and only T and r are searched.
    #[serde(default)]
    pub band_width: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_phase_samples")]
    pub phase_samples: usize,
    /// Detuning points per unit Ω on band grids.
    #[serde(default = "default_density")]
    pub points_per_rabi: f64,
}

fn default_threshold() -> f64 {
    0.95
}

fn default_phase_samples() -> usize {
    8
}

fn default_density() -> f64 {
    8.0
}

impl Objective {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            band_width: None,
            threshold: default_threshold(),
            phase_samples: default_phase_samples(),
            points_per_rabi: default_density(),
        }
    }

    pub fn with_band_width(mut self, w: f64) -> Self {
        self.band_width = Some(w);
        self
    }

    pub fn with_density(mut self, points_per_rabi: f64) -> Self {
        self.points_per_rabi = points_per_rabi;
        self
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(AnalysisError::Grid(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if let Some(w) = self.band_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(AnalysisError::Grid(format!(
                    "band width must be positive, got {w}"
                )));
            }
        }
        if self.kind == ObjectiveKind::PhaseAveragedBand && self.phase_samples < 2 {
            return Err(AnalysisError::Grid(
                "phase averaging needs ≥ 2 samples".into(),
            ));
        }
        if !(self.points_per_rabi.is_finite() && self.points_per_rabi > 0.0) {
            return Err(AnalysisError::Grid("grid density must be positive".into()));
        }
        Ok(())
    }

    fn band_grid(&self, pulse: &SapPulse, widen: f64) -> Vec<f64> {
        let w = pulse.band_width() * widen;
        let n = (self.points_per_rabi * w / pulse.base.omega_max).ceil() as usize;
        // odd count keeps δ = 0 on the grid
        uniform_grid(-0.5 * w, 0.5 * w, (n | 1).max(3))
    }

    /// Objective value for one profile; `seed` drives phase sampling.
    pub fn evaluate(
        &self,
        params: &HshParams,
        template: &SapTemplate,
        solver: &SolverOptions,
        seed: u64,
    ) -> Result<f64, AnalysisError> {
        let pulse = template.build(params)?;
        let sweep = |p: &SapPulse, grid: &[f64]| -> Vec<Option<f64>> {
            grid.iter()
                .map(|&d| transfer_fidelity(p, d, solver).ok())
                .collect()
        };
        match self.kind {
            ObjectiveKind::SuturePoint => {
                let points = pulse.suture_points();
                if points.is_empty() {
                    return Err(AnalysisError::Grid(
                        "a single tone has no suture point".into(),
                    ));
                }
                let mut worst = f64::INFINITY;
                for d in points {
                    worst = worst.min(transfer_fidelity(&pulse, d, solver)?);
                }
                Ok(worst)
            }
            ObjectiveKind::BandAverage => {
                let grid = self.band_grid(&pulse, 1.0);
                band_average(&grid, &sweep(&pulse, &grid), pulse.band_width())
                    .ok_or_else(|| AnalysisError::Grid("every band point failed".into()))
            }
            ObjectiveKind::BandwidthAtThreshold => {
                let grid = self.band_grid(&pulse, 1.2);
                Ok(bandwidth_at_threshold(
                    &grid,
                    &sweep(&pulse, &grid),
                    self.threshold,
                ))
            }
            ObjectiveKind::PhaseAveragedBand => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let grid = self.band_grid(&pulse, 1.0);
                let mut total = 0.0;
                for _ in 0..self.phase_samples {
                    let phases = random_phases(&mut rng, template.n_components);
                    let p = template
                        .clone()
                        .with_phases(PhasePolicy::Fixed(phases))
                        .build(params)?;
                    total += band_average(&grid, &sweep(&p, &grid), p.band_width())
                        .ok_or_else(|| AnalysisError::Grid("every band point failed".into()))?;
                }
                Ok(total / self.phase_samples as f64)
            }
        }
    }
}

/// Inclusive search interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn validate(&self, name: &str) -> Result<(), AnalysisError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.hi >= self.lo) {
            return Err(AnalysisError::Grid(format!(
                "{name} bounds must be positive and ordered, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lo * (1.0 - 1e-12) && v <= self.hi * (1.0 + 1e-12)
    }

    /// Log-uniform map from u ∈ [0, 1].
    fn at(&self, u: f64) -> f64 {
        if self.hi == self.lo {
            self.lo
        } else {
            (self.lo.ln() + u.clamp(0.0, 1.0) * (self.hi / self.lo).ln()).exp()
        }
    }

    fn degenerate(&self) -> bool {
        self.hi == self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub edge_shape: Interval,
    pub edge_rate: Interval,
    pub linear_rate: Interval,
}

impl Bounds {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        self.edge_shape.validate("edge_shape")?;
        self.edge_rate.validate("edge_rate")?;
        self.linear_rate.validate("linear_rate")
    }

    pub fn contains(&self, p: &HshParams) -> bool {
        self.edge_shape.contains(p.edge_shape)
            && self.edge_rate.contains(p.edge_rate)
            && self.linear_rate.contains(p.linear_rate)
    }
}

/// Profile parameters that the optimizer leaves alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub omega_max: f64,
    pub edge_duration: f64,
    pub center_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub fixed: FixedParams,
    pub bounds: Bounds,
    pub template: SapTemplate,
    pub objective: Objective,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Scan points per searched axis.
    pub coarse_points: usize,
    /// Objective evaluations allowed for the simplex stage.
    pub refine_budget: usize,
    /// Spread of simplex values at which refinement stops.
    pub tolerance: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            coarse_points: 11,
            refine_budget: 200,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub params: HshParams,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_params: HshParams,
    pub best_value: f64,
    pub evaluations: usize,
    /// Best point after the scan and after every simplex iteration.
    pub trace: Vec<TracePoint>,
    pub converged: bool,
}

/// Outcome of mapping search coordinates to a profile.
enum Candidate {
    Feasible(HshParams),
    /// Constraint violation, larger is worse.
    Infeasible(f64),
}

impl Problem {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        self.bounds.validate()?;
        self.objective.validate()?;
        self.solver.validate()?;
        let f = &self.fixed;
        HshParams::new(
            f.omega_max,
            self.bounds.edge_shape.lo,
            self.bounds.edge_rate.lo,
            self.bounds.linear_rate.lo,
            f.edge_duration,
            f.center_duration,
        )?;
        self.template.build(&HshParams::new(
            f.omega_max,
            self.bounds.edge_shape.hi,
            self.bounds.edge_rate.hi,
            self.bounds.linear_rate.hi,
            f.edge_duration,
            f.center_duration,
        )?)?;
        Ok(())
    }

    fn derives_linear_rate(&self) -> bool {
        self.objective.band_width.is_some()
    }

    /// Searched axes: T and r always, r₁ unless derived from the band.
    fn axes(&self) -> Vec<Interval> {
        let b = &self.bounds;
        let mut all = vec![b.edge_shape, b.edge_rate];
        if !self.derives_linear_rate() {
            all.push(b.linear_rate);
        }
        all
    }

    fn candidate(&self, u: &[f64]) -> Candidate {
        let axes = self.axes();
        let t = axes[0].at(u[0]);
        let r = axes[1].at(u[1]);
        let f = &self.fixed;
        let r1 = match self.objective.band_width {
            None => axes[2].at(u[2]),
            Some(w) => {
                let span = w / self.template.n_components as f64;
                let edge = 2.0 * r * (f.edge_duration / t).tanh();
                let r1 = (span - edge) * t / f.center_duration;
                let lr = self.bounds.linear_rate;
                if r1 < lr.lo {
                    return Candidate::Infeasible((lr.lo - r1) / lr.lo);
                }
                if r1 > lr.hi {
                    return Candidate::Infeasible((r1 - lr.hi) / lr.hi);
                }
                r1
            }
        };
        match HshParams::new(f.omega_max, t, r, r1, f.edge_duration, f.center_duration) {
            Ok(p) => Candidate::Feasible(p),
            Err(_) => Candidate::Infeasible(1.0),
        }
    }

    /// Objective at search coordinates; infeasible points score below any
    /// feasible value. Solver failures score as infeasible.
    fn score(&self, u: &[f64], seed: u64) -> (Option<HshParams>, f64) {
        match self.candidate(u) {
            Candidate::Feasible(p) => {
                match self
                    .objective
                    .evaluate(&p, &self.template, &self.solver, seed)
                {
                    Ok(v) => (Some(p), v),
                    Err(_) => (None, -1.0),
                }
            }
            Candidate::Infeasible(excess) => (None, -1.0 - excess),
        }
    }
}

fn scan_points(dims: usize, per_axis: usize, axes: &[Interval]) -> Vec<Vec<f64>> {
    let levels: Vec<Vec<f64>> = axes[..dims]
        .iter()
        .map(|a| {
            if a.degenerate() || per_axis < 2 {
                vec![0.5]
            } else {
                uniform_grid(0.0, 1.0, per_axis)
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for lv in &levels {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                lv.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

/// Grid scan over the bounds box followed by bounded Nelder–Mead.
pub fn optimize(
    problem: &Problem,
    settings: &Settings,
    seed: u64,
) -> Result<OptimizationResult, AnalysisError> {
    problem.validate()?;
    if settings.coarse_points == 0 {
        return Err(AnalysisError::Grid(
            "coarse scan needs at least one point per axis".into(),
        ));
    }
    let axes = problem.axes();
    let dims = axes.len();
    let scan = scan_points(dims, settings.coarse_points, &axes);
    let scored: Vec<(Option<HshParams>, f64)> =
        scan.par_iter().map(|u| problem.score(u, seed)).collect();
    let mut evaluations = scan.len();
    // first maximum in scan order
    let (best_idx, _) = scored
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| {
            if s.1 > acc.1 {
                (i, s.1)
            } else {
                acc
            }
        });

    let active: Vec<usize> = (0..dims).filter(|&i| !axes[i].degenerate()).collect();
    let mut trace = Vec::new();
    let base_u = scan[best_idx].clone();
    let mut best = scored[best_idx];
    if let Some(p) = best.0 {
        trace.push(TracePoint {
            params: p,
            value: best.1,
        });
    }
    if active.is_empty() {
        let p = best
            .0
            .ok_or_else(|| AnalysisError::Grid("the only admissible point is infeasible".into()))?;
        return Ok(OptimizationResult {
            best_params: p,
            best_value: best.1,
            evaluations,
            trace,
            converged: true,
        });
    }

    // simplex in the active coordinates, first edge one scan cell long
    let cell = if settings.coarse_points > 1 {
        1.0 / (settings.coarse_points - 1) as f64
    } else {
        0.25
    };
    let embed = |x: &[f64]| -> Vec<f64> {
        let mut u = base_u.clone();
        for (k, &i) in active.iter().enumerate() {
            u[i] = x[k].clamp(0.0, 1.0);
        }
        u
    };
    let x0: Vec<f64> = active.iter().map(|&i| base_u[i]).collect();
    let mut simplex: Vec<(Vec<f64>, f64, Option<HshParams>)> = vec![(x0.clone(), best.1, best.0)];
    for k in 0..active.len() {
        let mut x = x0.clone();
        x[k] = if x[k] + cell <= 1.0 {
            x[k] + cell
        } else {
            x[k] - cell
        };
        let (p, v) = problem.score(&embed(&x), seed);
        evaluations += 1;
        simplex.push((x, v, p));
    }

    let budget_end = evaluations + settings.refine_budget;
    let mut converged = false;
    let d = active.len();
    loop {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let spread = simplex[0].1 - simplex[d].1;
        if simplex[0].1 > best.1 {
            best = (simplex[0].2, simplex[0].1);
        }
        if let Some(p) = best.0 {
            if trace.last().map_or(true, |t: &TracePoint| t.value < best.1) {
                trace.push(TracePoint {
                    params: p,
                    value: best.1,
                });
            }
        }
        if spread.abs() < settings.tolerance && simplex[0].2.is_some() {
            converged = true;
            break;
        }
        if evaluations >= budget_end {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|s| s.0[k]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].clone();
        let along = |c: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(m, w)| (m + c * (m - w)).clamp(0.0, 1.0))
                .collect()
        };
        let mut eval = |x: Vec<f64>| {
            let (p, v) = problem.score(&embed(&x), seed);
            evaluations += 1;
            (x, v, p)
        };
        let reflected = eval(along(1.0));
        if reflected.1 > simplex[0].1 {
            let expanded = eval(along(2.0));
            simplex[d] = if expanded.1 > reflected.1 {
                expanded
            } else {
                reflected
            };
        } else if reflected.1 > simplex[d - 1].1 {
            simplex[d] = reflected;
        } else {
            let contracted = if reflected.1 > worst.1 {
                eval(along(0.5))
            } else {
                eval(along(-0.5))
            };
            if contracted.1 > worst.1.max(reflected.1) {
                simplex[d] = contracted;
            } else {
                let top = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = top
                        .iter()
                        .zip(&s.0)
                        .map(|(a, b)| a + 0.5 * (b - a))
                        .collect();
                    *s = eval(x);
                }
            }
        }
    }

    let p = best
        .0
        .ok_or_else(|| AnalysisError::Grid("no feasible point inside the bounds box".into()))?;
    debug_assert!(problem.bounds.contains(&p));
    Ok(OptimizationResult {
        best_params: p,
        best_value: best.1,
        evaluations,
        trace,
        converged,
    })
}

/// Seed for condition `index` derived from a master seed.
pub fn condition_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng.gen()
}

/// One independent optimization per condition value; `adapt` rewrites the
/// base problem for each condition (e.g. sets the template's window shift).
pub fn reoptimize_per_condition<A>(
    base: &Problem,
    conditions: &[f64],
    adapt: A,
    settings: &Settings,
    master_seed: u64,
) -> Vec<Result<OptimizationResult, AnalysisError>>
where
    A: Fn(&Problem, f64) -> Problem + Sync,
{
    conditions
        .par_iter()
        .enumerate()
        .map(|(i, &c)| optimize(&adapt(base, c), settings, condition_seed(master_seed, i)))
        .collect()
}
