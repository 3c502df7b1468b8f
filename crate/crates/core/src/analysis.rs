//! Fidelity maps over detuning and parameter grids, bandwidth metrics and the
//! robustness studies built on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::{
    transfer_fidelity, transfer_probability, RotatingFrameHamiltonian, SolverOptions,
};
use crate::error::{AnalysisError, SolverError};
use crate::pulse::{random_phases, HshParams, PhasePolicy, SapPulse, SapTemplate};

/// Default fidelity threshold for bandwidth and phase-diagram boundaries.
pub const DEFAULT_THRESHOLD: f64 = 0.95;

/// Rabi-axis scaling: r = 0.3·Ω², r₁ = 0.15·Ω².
pub const RABI_AXIS_EDGE_RATE: f64 = 0.3;
pub const RABI_AXIS_LINEAR_RATE: f64 = 0.15;

/// Parameter swept along the rows of a [`FidelityMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Total pulse duration τ (µs).
    Duration,
    /// Peak Rabi frequency Ω (rad/µs).
    Rabi,
    /// Fractional amplitude error δΩ/Ω.
    RabiError,
    /// Window shift δ_f (rad/µs).
    Shift,
}

impl AxisKind {
    pub fn label(self) -> &'static str {
        match self {
            AxisKind::Duration => "duration_us",
            AxisKind::Rabi => "rabi_rad_per_us",
            AxisKind::RabiError => "rabi_error_fraction",
            AxisKind::Shift => "shift_rad_per_us",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryAxis {
    pub kind: AxisKind,
    pub values: Vec<f64>,
}

/// Fidelity on a detuning grid, optionally stacked along a second axis.
///
/// `values[row][col]` is `None` where the solver failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityMap {
    pub detuning_grid: Vec<f64>,
    pub secondary: Option<SecondaryAxis>,
    pub values: Vec<Vec<Option<f64>>>,
    pub failures: usize,
    pub metadata: serde_json::Value,
}

impl FidelityMap {
    fn single(detuning_grid: Vec<f64>, row: Vec<Option<f64>>) -> Self {
        let failures = row.iter().filter(|v| v.is_none()).count();
        Self {
            detuning_grid,
            secondary: None,
            values: vec![row],
            failures,
            metadata: serde_json::Value::Null,
        }
    }

    fn stacked(detuning_grid: Vec<f64>, axis: SecondaryAxis, rows: Vec<Vec<Option<f64>>>) -> Self {
        let failures = rows.iter().flatten().filter(|v| v.is_none()).count();
        Self {
            detuning_grid,
            secondary: Some(axis),
            values: rows,
            failures,
            metadata: serde_json::Value::Null,
        }
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.values[i]
    }

    /// Checks shape and range invariants.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let expected_rows = self.secondary.as_ref().map_or(1, |a| a.values.len());
        if self.values.len() != expected_rows {
            return Err(AnalysisError::Grid(format!(
                "{} rows for a secondary axis of {expected_rows}",
                self.values.len()
            )));
        }
        for row in &self.values {
            if row.len() != self.detuning_grid.len() {
                return Err(AnalysisError::Grid(format!(
                    "row of {} values for {} detunings",
                    row.len(),
                    self.detuning_grid.len()
                )));
            }
            if let Some(v) = row.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(AnalysisError::Grid(format!("fidelity {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Bandwidth of a single-row map.
    pub fn bandwidth(&self, threshold: f64) -> Result<f64, AnalysisError> {
        if self.rows() != 1 {
            return Err(AnalysisError::Grid(format!(
                "bandwidth needs a single-row map, got {} rows",
                self.rows()
            )));
        }
        Ok(bandwidth_at_threshold(
            &self.detuning_grid,
            &self.values[0],
            threshold,
        ))
    }
}

/// `n` evenly spaced points on [lo, hi].
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Uniform grid across the band [−W/2, W/2] of `pulse`.
pub fn band_grid(pulse: &SapPulse, n: usize) -> Vec<f64> {
    let half = 0.5 * pulse.band_width();
    uniform_grid(-half, half, n)
}

fn check_grid(grid: &[f64]) -> Result<(), AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::Grid("detuning grid is empty".into()));
    }
    if grid.iter().any(|d| !d.is_finite()) {
        return Err(AnalysisError::Grid(
            "detuning grid has non-finite entries".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::Grid(
            "detuning grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn evaluate_row<F>(grid: &[f64], f: F) -> Vec<Option<f64>>
where
    F: Fn(f64) -> Result<f64, SolverError> + Sync,
{
    grid.par_iter().map(|&d| f(d).ok()).collect()
}

/// One transfer fidelity per detuning; failed points are recorded as absent.
pub fn detuning_sweep(
    pulse: &SapPulse,
    detuning_grid: &[f64],
    opts: &SolverOptions,
) -> Result<FidelityMap, AnalysisError> {
    check_grid(detuning_grid)?;
    opts.validate()?;
    let row = evaluate_row(detuning_grid, |d| transfer_fidelity(pulse, d, opts));
    Ok(
        FidelityMap::single(detuning_grid.to_vec(), row).with_metadata(json!({
            "pulse": pulse,
            "solver": opts,
        })),
    )
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        0.5 * (x0 + x1)
    } else {
        x0 + (level - y0) * (x1 - x0) / (y1 - y0)
    }
}

/// Width of the contiguous δ-interval around band center with F ≥ threshold.
///
/// The interval is anchored at the grid point nearest δ = 0; its ends are
/// placed by linear interpolation to the neighbouring sub-threshold point.
/// Missing points count as sub-threshold.
pub fn bandwidth_at_threshold(grid: &[f64], row: &[Option<f64>], threshold: f64) -> f64 {
    let Some(center) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
    else {
        return 0.0;
    };
    let ok = |i: usize| row[i].is_some_and(|v| v >= threshold);
    if !ok(center) {
        return 0.0;
    }
    let mut lo = center;
    while lo > 0 && ok(lo - 1) {
        lo -= 1;
    }
    let mut hi = center;
    while hi + 1 < grid.len() && ok(hi + 1) {
        hi += 1;
    }
    let left = match (lo > 0).then(|| row[lo - 1]).flatten() {
        Some(y) => crossing(grid[lo - 1], y, grid[lo], row[lo].unwrap(), threshold),
        None if lo > 0 => grid[lo - 1],
        None => grid[lo],
    };
    let right = match (hi + 1 < grid.len()).then(|| row[hi + 1]).flatten() {
        Some(y) => crossing(grid[hi], row[hi].unwrap(), grid[hi + 1], y, threshold),
        None if hi + 1 < grid.len() => grid[hi + 1],
        None => grid[hi],
    };
    right - left
}

/// Trapezoidal mean of the fidelity over δ ∈ [−W/2, W/2], using only grid
/// points inside the band that evaluated successfully.
pub fn band_average(grid: &[f64], row: &[Option<f64>], band_width: f64) -> Option<f64> {
    let half = 0.5 * band_width * (1.0 + 1e-12);
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(row)
        .filter(|(d, _)| d.abs() <= half)
        .filter_map(|(&d, v)| v.map(|v| (d, v)))
        .collect();
    match pts.len() {
        0 => None,
        1 => Some(pts[0].1),
        _ => {
            let span = pts.last().unwrap().0 - pts[0].0;
            let area: f64 = pts
                .windows(2)
                .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
                .sum();
            Some(area / span)
        }
    }
}

/// Least-squares line through `(x, y)`: returns (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x[..n]
        .iter()
        .zip(&y[..n])
        .map(|(a, b)| (a - mx) * (b - my))
        .sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingAxis {
    Duration,
    Rabi,
}

/// Companion fit for a scaling study: dW/dτ on the duration axis, or the
/// log–log exponent of W against Ω on the rabi axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Axis values with a positive bandwidth that entered the fit.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub map: FidelityMap,
    pub bandwidths: Vec<f64>,
    pub fit: Option<ScalingFit>,
}

/// Profile at one point of a scaling axis.
pub fn scaled_params(
    base: &HshParams,
    axis: ScalingAxis,
    value: f64,
) -> Result<HshParams, AnalysisError> {
    let p = match axis {
        ScalingAxis::Duration => HshParams::with_total_duration(
            base.omega_max,
            base.edge_shape,
            base.edge_rate,
            base.linear_rate,
            base.edge_duration,
            value,
        )?,
        ScalingAxis::Rabi => HshParams::new(
            value,
            base.edge_shape,
            RABI_AXIS_EDGE_RATE * value * value,
            RABI_AXIS_LINEAR_RATE * value * value,
            base.edge_duration,
            base.center_duration,
        )?,
    };
    Ok(p)
}

/// Fidelity map along a duration or Rabi axis with bandwidths and fit.
pub fn scaling_study(
    base: &HshParams,
    template: &SapTemplate,
    axis: ScalingAxis,
    axis_grid: &[f64],
    detuning_grid: &[f64],
    opts: &SolverOptions,
) -> Result<ScalingStudy, AnalysisError> {
    check_grid(detuning_grid)?;
    opts.validate()?;
    let pulses = axis_grid
        .iter()
        .map(|&v| Ok(template.build(&scaled_params(base, axis, v)?)?))
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let rows: Vec<Vec<Option<f64>>> = pulses
        .iter()
        .map(|p| evaluate_row(detuning_grid, |d| transfer_fidelity(p, d, opts)))
        .collect();
    let bandwidths: Vec<f64> = rows
        .iter()
        .map(|r| bandwidth_at_threshold(detuning_grid, r, DEFAULT_THRESHOLD))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = axis_grid
        .iter()
        .zip(&bandwidths)
        .filter(|(_, w)| **w > 0.0)
        .map(|(&x, &w)| match axis {
            ScalingAxis::Duration => (x, w),
            ScalingAxis::Rabi => (x.ln(), w.ln()),
        })
        .unzip();
    let fit = linear_fit(&xs, &ys).map(|(slope, intercept)| ScalingFit {
        slope,
        intercept,
        points: xs.len(),
    });
    let kind = match axis {
        ScalingAxis::Duration => AxisKind::Duration,
        ScalingAxis::Rabi => AxisKind::Rabi,
    };
    let map = FidelityMap::stacked(
        detuning_grid.to_vec(),
        SecondaryAxis {
            kind,
            values: axis_grid.to_vec(),
        },
        rows,
    )
    .with_metadata(json!({
        "base": base,
        "template": template,
        "axis": axis,
        "threshold": DEFAULT_THRESHOLD,
        "solver": opts,
    }));
    Ok(ScalingStudy {
        map,
        bandwidths,
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAverage {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

/// Mean and sample standard deviation of the fidelity over `samples` i.i.d.
/// uniform tone-phase vectors drawn from a ChaCha8 stream seeded by `seed`.
pub fn phase_average(
    params: &HshParams,
    template: &SapTemplate,
    detuning: f64,
    samples: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<PhaseAverage, AnalysisError> {
    if samples < 2 {
        return Err(AnalysisError::Grid(format!(
            "phase average needs ≥ 2 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = template.n_components;
    let pulses = (0..samples)
        .map(|_| {
            template
                .clone()
                .with_phases(PhasePolicy::Fixed(random_phases(&mut rng, n)))
                .build(params)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = pulses
        .par_iter()
        .map(|p| transfer_fidelity(p, detuning, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    Ok(PhaseAverage {
        mean,
        std: var.sqrt(),
        samples,
    })
}

/// A stacked map together with the band-averaged fidelity of each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessScan {
    pub map: FidelityMap,
    pub band_averages: Vec<Option<f64>>,
}

/// Fidelity against detuning for each fractional Rabi error δΩ/Ω.
pub fn rabi_error_scan(
    pulse: &SapPulse,
    detuning_grid: &[f64],
    error_grid: &[f64],
    opts: &SolverOptions,
) -> Result<RobustnessScan, AnalysisError> {
    check_grid(detuning_grid)?;
    opts.validate()?;
    let drives = error_grid
        .iter()
        .map(|&e| RotatingFrameHamiltonian::new(pulse.clone(), 0.0).with_rabi_error(e))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<Option<f64>>> = drives
        .iter()
        .map(|h| {
            evaluate_row(detuning_grid, |d| {
                let mut h = h.clone();
                h.detuning = d;
                transfer_probability(&h, opts)
            })
        })
        .collect();
    let w = pulse.band_width();
    let band_averages = rows
        .iter()
        .map(|r| band_average(detuning_grid, r, w))
        .collect();
    let map = FidelityMap::stacked(
        detuning_grid.to_vec(),
        SecondaryAxis {
            kind: AxisKind::RabiError,
            values: error_grid.to_vec(),
        },
        rows,
    )
    .with_metadata(json!({ "pulse": pulse, "band_width": w, "solver": opts }));
    Ok(RobustnessScan { map, band_averages })
}

/// Band n·f of the unshifted layout; shifted pulses are averaged over the
/// band they were meant to cover.
pub fn nominal_band(pulse: &SapPulse) -> f64 {
    pulse.n_components as f64 * pulse.base.chirp_span()
}

/// Fidelity against detuning for each window shift δ_f.
///
/// `params_for_shift` supplies the profile used at each shift: the same
/// profile for every shift, or one re-optimized per shift.
pub fn freq_shift_scan<P>(
    template: &SapTemplate,
    detuning_grid: &[f64],
    shift_grid: &[f64],
    params_for_shift: P,
    opts: &SolverOptions,
) -> Result<RobustnessScan, AnalysisError>
where
    P: Fn(usize, f64) -> Result<HshParams, AnalysisError>,
{
    check_grid(detuning_grid)?;
    opts.validate()?;
    let pulses = shift_grid
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            Ok(template
                .clone()
                .with_delta_f(s)
                .build(&params_for_shift(i, s)?)?)
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let rows: Vec<Vec<Option<f64>>> = pulses
        .iter()
        .map(|p| evaluate_row(detuning_grid, |d| transfer_fidelity(p, d, opts)))
        .collect();
    let band_averages = rows
        .iter()
        .zip(&pulses)
        .map(|(r, p)| band_average(detuning_grid, r, nominal_band(p)))
        .collect();
    let profiles: Vec<HshParams> = pulses.iter().map(|p| p.base).collect();
    let map = FidelityMap::stacked(
        detuning_grid.to_vec(),
        SecondaryAxis {
            kind: AxisKind::Shift,
            values: shift_grid.to_vec(),
        },
        rows,
    )
    .with_metadata(json!({ "template": template, "profiles": profiles, "solver": opts }));
    Ok(RobustnessScan { map, band_averages })
}

/// Two-tone sweeps differing only in the relative chirp direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpComparison {
    pub opposite: FidelityMap,
    pub same: FidelityMap,
    pub opposite_average: Option<f64>,
    pub same_average: Option<f64>,
}

pub fn chirp_direction_comparison(
    params: &HshParams,
    template: &SapTemplate,
    detuning_grid: &[f64],
    opts: &SolverOptions,
) -> Result<ChirpComparison, AnalysisError> {
    if template.n_components != 2 {
        return Err(AnalysisError::Grid(format!(
            "chirp comparison needs two tones, got {}",
            template.n_components
        )));
    }
    let opposite_pulse = template.clone().with_same_chirp(false).build(params)?;
    let same_pulse = template.clone().with_same_chirp(true).build(params)?;
    let opposite = detuning_sweep(&opposite_pulse, detuning_grid, opts)?;
    let same = detuning_sweep(&same_pulse, detuning_grid, opts)?;
    let w = opposite_pulse.band_width();
    Ok(ChirpComparison {
        opposite_average: band_average(detuning_grid, &opposite.values[0], w),
        same_average: band_average(detuning_grid, &same.values[0], w),
        opposite,
        same,
    })
}

/// Level set of a band-averaged fidelity landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBoundary {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// `values[i][j]` at (axis1[i], axis2[j]).
    pub values: Vec<Vec<Option<f64>>>,
    pub threshold: f64,
    /// Per axis1 value, the first axis2 value where the landscape crosses the
    /// threshold, or `None`.
    pub boundary: Vec<Option<f64>>,
}

/// First threshold crossing along a row, linearly interpolated.
pub fn first_crossing(axis: &[f64], row: &[Option<f64>], threshold: f64) -> Option<f64> {
    axis.windows(2)
        .zip(row.windows(2))
        .find_map(|(x, y)| match (y[0], y[1]) {
            (Some(a), Some(b))
                if (a - threshold) * (b - threshold) < 0.0 || (b == threshold && a != b) =>
            {
                Some(crossing(x[0], a, x[1], b, threshold))
            }
            _ => None,
        })
}

/// Evaluates `cell(a1, a2)` on the full grid and extracts the boundary.
pub fn threshold_boundary<F>(
    axis1: &[f64],
    axis2: &[f64],
    cell: F,
    threshold: f64,
) -> ThresholdBoundary
where
    F: Fn(f64, f64) -> Result<f64, AnalysisError> + Sync,
{
    let cells: Vec<(f64, f64)> = axis1
        .iter()
        .flat_map(|&a| axis2.iter().map(move |&b| (a, b)))
        .collect();
    let flat: Vec<Option<f64>> = cells.par_iter().map(|&(a, b)| cell(a, b).ok()).collect();
    let values: Vec<Vec<Option<f64>>> = flat
        .chunks(axis2.len().max(1))
        .map(|c| c.to_vec())
        .collect();
    let boundary = values
        .iter()
        .map(|row| first_crossing(axis2, row, threshold))
        .collect();
    ThresholdBoundary {
        axis1: axis1.to_vec(),
        axis2: axis2.to_vec(),
        values,
        threshold,
        boundary,
    }
}
