//! Analytic treatment of the two-tone suture point (δ = 0).
//!
//! At the suture point the compact SAP2 Hamiltonian reduces to
//! `Ω̄(t)·cos θ(t)·σx`, which commutes with itself at all times, so the
//! fidelity is exactly `sin²φ(τ)` with `φ(t) = ∫₀ᵗ Ω̄ cos θ`. Inside the linear
//! segment θ is quadratic, and the lobes of φ between successive zeros of
//! cos θ form an alternating series whose partial sums converge by the
//! Leibniz criterion.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, PulseError, SolverError};
use crate::pulse::HshParams;
use crate::quadrature::integrate_with_breakpoints;

/// Phase accumulation θ(t) = f·t/2 + ∫₀ᵗΔ, with f the chirp span.
pub fn theta(params: &HshParams, t: f64) -> Result<f64, PulseError> {
    Ok(0.5 * params.chirp_span() * t + params.chirp_phase(t)?)
}

fn theta_unchecked(params: &HshParams, f: f64, t: f64) -> f64 {
    0.5 * f * t + params.chirp_phase_unchecked(t)
}

/// Rate dθ/dt = f/2 + Δ(t); zero at t = 0 and non-negative on the window.
pub fn theta_rate(params: &HshParams, t: f64) -> Result<f64, PulseError> {
    Ok(0.5 * params.chirp_span() + params.chirp(t)?)
}

/// Times where θ(t) = π/2 + kπ for k = 0..=k_max, restricted to [0, τ].
///
/// θ is monotone, so each root is found by bisection on its bracket.
pub fn crossing_times(params: &HshParams, k_max: usize) -> Vec<f64> {
    let f = params.chirp_span();
    let tau = params.duration();
    let end = theta_unchecked(params, f, tau);
    let mut out = Vec::new();
    let mut lo = 0.0;
    for k in 0..=k_max {
        let level = FRAC_PI_2 + k as f64 * PI;
        if level > end {
            break;
        }
        let (mut a, mut b) = (lo, tau);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if theta_unchecked(params, f, m) < level {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 4.0 * f64::EPSILON * tau {
                break;
            }
        }
        let root = 0.5 * (a + b);
        out.push(root);
        lo = root;
    }
    out
}

/// All crossing times inside [0, τ].
pub fn all_crossing_times(params: &HshParams) -> Vec<f64> {
    let f = params.chirp_span();
    let end = theta_unchecked(params, f, params.duration());
    let k_max = ((end - FRAC_PI_2) / PI).floor().max(0.0) as usize;
    crossing_times(params, k_max)
}

/// Quadrature tolerance used for φ.
pub const PHI_TOLERANCE: f64 = 1e-12;

/// φ(t) = ∫₀ᵗ Ω̄(t′)·cos θ(t′) dt′, integrated lobe by lobe between the zeros
/// of cos θ and the segment seams.
pub fn phi_numeric(params: &HshParams, t: f64) -> Result<f64, SolverError> {
    params.chirp(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let f = params.chirp_span();
    let mut points = vec![0.0, t];
    points.extend(
        all_crossing_times(params)
            .into_iter()
            .chain([
                params.edge_duration,
                params.edge_duration + params.center_duration,
            ])
            .filter(|&x| x > 0.0 && x < t),
    );
    points.sort_by(f64::total_cmp);
    points.dedup();
    let q = integrate_with_breakpoints(
        |s| params.envelope_unchecked(s) * theta_unchecked(params, f, s).cos(),
        &points,
        PHI_TOLERANCE,
        0.0,
    )?;
    Ok(q.value)
}

/// Suture-point fidelity sin²φ(τ).
pub fn suture_fidelity(params: &HshParams) -> Result<f64, SolverError> {
    Ok(phi_numeric(params, params.duration())?.sin().powi(2))
}

/// Triangle-lobe expansion of φ after its first maximum past the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SutureSeries {
    /// a = r₁/(2T): curvature of θ in the linear segment.
    pub a: f64,
    /// b = (f/2 + Δ(t₀))/(2a).
    pub b: f64,
    pub t0: f64,
    pub phi_t0: f64,
    pub omega_max: f64,
    /// Increments (Ω/2)(−1)ᵏ[√(b²+kπ/a) − √(b²+(k−1)π/a)], k = 1..n.
    pub terms: Vec<f64>,
    /// `partial_sums[N]` = φ(t₀) + first N terms.
    pub partial_sums: Vec<f64>,
}

impl SutureSeries {
    /// The last partial sum.
    pub fn estimate(&self) -> f64 {
        *self
            .partial_sums
            .last()
            .expect("partial sums include φ(t0)")
    }

    /// Limit of the infinite series, from repeated averaging of the tail of
    /// partial sums (Euler transform).
    pub fn limit(&self) -> f64 {
        let take = self.partial_sums.len().min(24);
        let mut s: Vec<f64> = self.partial_sums[self.partial_sums.len() - take..].to_vec();
        while s.len() > 1 {
            s = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        s[0]
    }

    /// Time at which the k-th lobe after t₀ closes.
    pub fn lobe_end(&self, k: usize) -> f64 {
        self.t0 + (self.b * self.b + k as f64 * PI / self.a).sqrt() - self.b
    }
}

/// Builds the alternating series for φ with `n_terms` increments.
pub fn phi_series(params: &HshParams, n_terms: usize) -> Result<SutureSeries, AnalysisError> {
    if n_terms < 2 {
        return Err(AnalysisError::Grid(format!(
            "series needs at least 2 terms, got {n_terms}"
        )));
    }
    params.validate()?;
    let (t1, t2) = (params.edge_duration, params.center_duration);
    let crossings = all_crossing_times(params);
    // maxima of φ: cos θ turns from + to −, i.e. θ = π/2 + 2jπ
    let t0 = crossings
        .iter()
        .step_by(2)
        .copied()
        .find(|&t| t > t1)
        .ok_or_else(|| {
            AnalysisError::NoCrossing(format!(
                "θ(τ) = {:.4} leaves no maximum of φ after t₁ = {t1}",
                theta(params, params.duration()).unwrap_or(f64::NAN)
            ))
        })?;
    if t0 > t1 + t2 {
        return Err(AnalysisError::NoCrossing(format!(
            "first maximum at t = {t0:.4} lies beyond the linear segment"
        )));
    }
    let a = params.linear_rate / (2.0 * params.edge_shape);
    let rate = 0.5 * params.chirp_span() + params.chirp(t0)?;
    let b = rate / (2.0 * a);
    let phi_t0 = phi_numeric(params, t0)?;
    let half = 0.5 * params.omega_max;
    let root = |k: usize| (b * b + k as f64 * PI / a).sqrt();
    let terms: Vec<f64> = (1..=n_terms)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * half * (root(k) - root(k - 1))
        })
        .collect();
    let mut partial_sums = Vec::with_capacity(n_terms + 1);
    partial_sums.push(phi_t0);
    for term in &terms {
        let last = *partial_sums.last().unwrap();
        partial_sums.push(last + term);
    }
    Ok(SutureSeries {
        a,
        b,
        t0,
        phi_t0,
        omega_max: params.omega_max,
        terms,
        partial_sums,
    })
}

/// Number of complete lobes after t₀ that fit inside the linear segment.
pub fn lobes_in_linear_segment(series: &SutureSeries, params: &HshParams) -> usize {
    let end = params.edge_duration + params.center_duration;
    (1..)
        .take_while(|&k| series.lobe_end(k) <= end)
        .last()
        .unwrap_or(0)
}

/// Leibniz bound |term_{N+1}| on |φ∞ − partial_sum_N|.
pub fn leibniz_tail_bound(series: &SutureSeries, n: usize) -> Option<f64> {
    series.terms.get(n).map(|t| t.abs())
}
