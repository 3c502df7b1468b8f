//! Two-level Schrödinger propagation in the frame rotating at the band center.
//!
//! Basis is (|e⟩, |s⟩); every drive is written as
//! `H(t) = (d(t)/2)·σz + g(t)·σ₊ + g*(t)·σ₋` with σ₊ = |e⟩⟨s|.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PulseError, SolverError};
use crate::pulse::{HshParams, SapPulse};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Allowed |‖ψ‖² − 1| at the end of a run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// A time-dependent 2×2 Hamiltonian on [0, duration].
pub trait Drive: Sync {
    fn duration(&self) -> f64;
    /// Level splitting d(t): H_ee = d/2, H_ss = −d/2.
    fn splitting(&self, t: f64) -> f64;
    /// Off-diagonal element H_es.
    fn coupling(&self, t: f64) -> Complex64;
    /// Largest angular frequency present; sets the default step ceiling.
    fn frequency_scale(&self) -> f64;

    fn matrix(&self, t: f64) -> Matrix2<Complex64> {
        let d = Complex64::from(0.5 * self.splitting(t));
        let g = self.coupling(t);
        Matrix2::new(d, g, g.conj(), -d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub amp_e: Complex64,
    pub amp_s: Complex64,
}

impl QubitState {
    pub fn excited() -> Self {
        Self {
            amp_e: Complex64::new(1.0, 0.0),
            amp_s: Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_e.norm_sqr() + self.amp_s.norm_sqr()
    }

    /// Population of |s⟩.
    pub fn target_population(&self) -> f64 {
        self.amp_s.norm_sqr()
    }

    pub fn overlap(&self, other: &QubitState) -> Complex64 {
        self.amp_e.conj() * other.amp_e + self.amp_s.conj() * other.amp_s
    }

    fn axpy(&self, h: f64, k: &QubitState) -> QubitState {
        QubitState {
            amp_e: self.amp_e + k.amp_e * h,
            amp_s: self.amp_s + k.amp_s * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    /// Dormand–Prince 5(4) with error control.
    Adaptive,
    /// Classical fourth-order Runge–Kutta with a fixed number of steps.
    FixedRk4 { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step ceiling; `None` derives it from the drive's frequency scale.
    pub max_step: Option<f64>,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: None,
            method: Method::Adaptive,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn fixed_rk4(steps: usize) -> Self {
        Self {
            method: Method::FixedRk4 { steps },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.rel_tol) || !ok(self.abs_tol) {
            return Err(SolverError::Options(format!(
                "tolerances must be positive (rel {}, abs {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if let Some(h) = self.max_step {
            if !ok(h) {
                return Err(SolverError::Options(format!(
                    "max_step must be positive, got {h}"
                )));
            }
        }
        if let Method::FixedRk4 { steps: 0 } = self.method {
            return Err(SolverError::Options(
                "fixed-step run needs at least one step".into(),
            ));
        }
        Ok(())
    }

    /// Step ceiling for a drive: never above τ/100 nor 2π/(20·scale).
    pub fn step_ceiling<D: Drive + ?Sized>(&self, drive: &D) -> f64 {
        let tau = drive.duration();
        let auto = (tau / 100.0).min(2.0 * PI / (20.0 * drive.frequency_scale().max(1e-300)));
        self.max_step.map_or(auto, |h| h.min(tau / 100.0))
    }
}

/// Outcome of one propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub state: QubitState,
    /// |‖ψ(τ)‖² − 1|.
    pub norm_drift: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// The SAP Hamiltonian for an atom detuned by δ from the band center,
/// after the rotating-wave approximation at the carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingFrameHamiltonian {
    pub pulse: SapPulse,
    pub detuning: f64,
    /// Fractional amplitude error δΩ/Ω applied to every tone.
    pub rabi_error: f64,
}

impl RotatingFrameHamiltonian {
    pub fn new(pulse: SapPulse, detuning: f64) -> Self {
        Self {
            pulse,
            detuning,
            rabi_error: 0.0,
        }
    }

    pub fn with_rabi_error(mut self, rabi_error: f64) -> Result<Self, PulseError> {
        if !(rabi_error.is_finite() && rabi_error > -1.0) {
            return Err(PulseError::RabiError(rabi_error));
        }
        self.rabi_error = rabi_error;
        Ok(self)
    }

    /// θₘ(t) = offsetₘ·t + sₘ·∫Δ for every tone.
    pub fn tone_phases(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        let integral = self.pulse.base.chirp_phase_unchecked(t);
        self.pulse
            .tone_offsets
            .iter()
            .zip(&self.pulse.chirp_signs)
            .map(move |(off, &s)| off * t + f64::from(s) * integral)
    }

    /// H(t) as a matrix; checked against the pulse window.
    pub fn hamiltonian_at(&self, t: f64) -> Result<Matrix2<Complex64>, PulseError> {
        self.pulse.base.chirp(t)?;
        Ok(self.matrix(t))
    }
}

impl Drive for RotatingFrameHamiltonian {
    fn duration(&self) -> f64 {
        self.pulse.duration()
    }

    fn splitting(&self, _t: f64) -> f64 {
        self.detuning
    }

    fn coupling(&self, t: f64) -> Complex64 {
        let amp = 0.5 * self.pulse.base.envelope_unchecked(t) * (1.0 + self.rabi_error);
        let sum: Complex64 = self
            .tone_phases(t)
            .zip(&self.pulse.amplitude_scales)
            .zip(&self.pulse.tone_phases)
            .map(|((theta, a), phi)| Complex64::from_polar(*a, -(theta + phi)))
            .sum();
        sum * amp
    }

    fn frequency_scale(&self) -> f64 {
        self.pulse.band_width() + self.detuning.abs() + self.pulse.base.omega_max
    }
}

/// Two-tone suture pulse written as a single real coupling,
/// `H = (δ/2)σz + Ω̄(t)·cos(f·t/2 + ∫Δ)·σx`.
///
/// Identical to the n = 2 multi-tone Hamiltonian with unit attenuation and
/// zero tone phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactSap2 {
    pub params: HshParams,
    pub detuning: f64,
    window: f64,
}

impl CompactSap2 {
    pub fn new(params: HshParams, detuning: f64) -> Self {
        Self {
            params,
            detuning,
            window: params.chirp_span(),
        }
    }

    /// Suture phase θ(t) = f·t/2 + ∫₀ᵗΔ.
    pub fn suture_phase(&self, t: f64) -> f64 {
        0.5 * self.window * t + self.params.chirp_phase_unchecked(t)
    }
}

impl Drive for CompactSap2 {
    fn duration(&self) -> f64 {
        self.params.duration()
    }

    fn splitting(&self, _t: f64) -> f64 {
        self.detuning
    }

    fn coupling(&self, t: f64) -> Complex64 {
        Complex64::from(self.params.envelope_unchecked(t) * self.suture_phase(t).cos())
    }

    fn frequency_scale(&self) -> f64 {
        2.0 * self.window + self.detuning.abs() + self.params.omega_max
    }
}

/// Constant-amplitude drive at fixed detuning: `H = (δ/2)σz + (Ω/2)σx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDrive {
    pub rabi: f64,
    pub detuning: f64,
    pub duration: f64,
}

impl Drive for ConstantDrive {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn splitting(&self, _t: f64) -> f64 {
        self.detuning
    }

    fn coupling(&self, _t: f64) -> Complex64 {
        Complex64::from(0.5 * self.rabi)
    }

    fn frequency_scale(&self) -> f64 {
        self.rabi.abs() + self.detuning.abs()
    }
}

/// Constant-amplitude linear sweep `d(t) = v·t − v·τ/2` across a symmetric
/// window of half-width `v·τ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSweep {
    pub rabi: f64,
    pub rate: f64,
    pub duration: f64,
}

impl LinearSweep {
    /// Sweep covering detunings ±`half_window` at `rate`.
    pub fn over_window(rabi: f64, rate: f64, half_window: f64) -> Self {
        Self {
            rabi,
            rate,
            duration: 2.0 * half_window / rate,
        }
    }
}

impl Drive for LinearSweep {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn splitting(&self, t: f64) -> f64 {
        self.rate * (t - 0.5 * self.duration)
    }

    fn coupling(&self, _t: f64) -> Complex64 {
        Complex64::from(0.5 * self.rabi)
    }

    fn frequency_scale(&self) -> f64 {
        0.5 * (self.rate * self.duration).abs() + self.rabi.abs()
    }
}

fn derivative<D: Drive + ?Sized>(drive: &D, t: f64, psi: &QubitState) -> QubitState {
    let t = t.clamp(0.0, drive.duration());
    let d = 0.5 * drive.splitting(t);
    let g = drive.coupling(t);
    QubitState {
        amp_e: -I * (psi.amp_e * d + g * psi.amp_s),
        amp_s: -I * (g.conj() * psi.amp_e - psi.amp_s * d),
    }
}

/// Propagates `psi0` across the drive window. Never renormalizes; a final norm
/// drift above [`NORM_DRIFT_LIMIT`] is an error.
pub fn evolve<D: Drive + ?Sized>(
    drive: &D,
    psi0: QubitState,
    opts: &SolverOptions,
) -> Result<Evolution, SolverError> {
    opts.validate()?;
    let tau = drive.duration();
    if !(tau.is_finite() && tau > 0.0) {
        return Err(SolverError::Options(format!(
            "drive duration must be positive, got {tau}"
        )));
    }
    let (state, accepted, rejected) = match opts.method {
        Method::FixedRk4 { steps } => (rk4(drive, psi0, steps), steps, 0),
        Method::Adaptive => dormand_prince(drive, psi0, opts)?,
    };
    let drift = (state.norm_sqr() - psi0.norm_sqr()).abs();
    if !(drift <= NORM_DRIFT_LIMIT) {
        return Err(SolverError::NormDrift {
            drift,
            limit: NORM_DRIFT_LIMIT,
        });
    }
    Ok(Evolution {
        state,
        norm_drift: drift,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// Population of |s⟩ after the drive, starting from |e⟩.
pub fn transfer_probability<D: Drive + ?Sized>(
    drive: &D,
    opts: &SolverOptions,
) -> Result<f64, SolverError> {
    Ok(evolve(drive, QubitState::excited(), opts)?
        .state
        .target_population())
}

/// Fidelity |⟨s|ψ(τ)⟩|² for an atom at detuning δ under the suture pulse.
pub fn transfer_fidelity(
    pulse: &SapPulse,
    detuning: f64,
    opts: &SolverOptions,
) -> Result<f64, SolverError> {
    transfer_probability(
        &RotatingFrameHamiltonian::new(pulse.clone(), detuning),
        opts,
    )
}

/// Fidelity from the compact two-tone form.
pub fn evolve_compact_sap2(
    params: &HshParams,
    detuning: f64,
    opts: &SolverOptions,
) -> Result<f64, SolverError> {
    params.validate()?;
    transfer_probability(&CompactSap2::new(*params, detuning), opts)
}

fn rk4<D: Drive + ?Sized>(drive: &D, mut psi: QubitState, steps: usize) -> QubitState {
    let tau = drive.duration();
    let h = tau / steps as f64;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = derivative(drive, t, &psi);
        let k2 = derivative(drive, t + 0.5 * h, &psi.axpy(0.5 * h, &k1));
        let k3 = derivative(drive, t + 0.5 * h, &psi.axpy(0.5 * h, &k2));
        let k4 = derivative(drive, t + h, &psi.axpy(h, &k3));
        psi = QubitState {
            amp_e: psi.amp_e + (k1.amp_e + (k2.amp_e + k3.amp_e) * 2.0 + k4.amp_e) * (h / 6.0),
            amp_s: psi.amp_s + (k1.amp_s + (k2.amp_s + k3.amp_s) * 2.0 + k4.amp_s) * (h / 6.0),
        };
    }
    psi
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dormand_prince<D: Drive + ?Sized>(
    drive: &D,
    psi0: QubitState,
    opts: &SolverOptions,
) -> Result<(QubitState, usize, usize), SolverError> {
    let tau = drive.duration();
    let h_max = opts.step_ceiling(drive);
    let mut h = (0.1 * h_max).max(1e-6 * tau);
    let mut t = 0.0;
    let mut psi = psi0;
    let mut k = [QubitState::excited(); 7];
    k[0] = derivative(drive, t, &psi);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut prev_err: f64 = 1e-4;

    while t < tau {
        let last = t + h >= tau;
        if last {
            h = tau - t;
        }
        for s in 1..7 {
            let mut y = psi;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    y = y.axpy(h * a, kj);
                }
            }
            let ts = if s == 6 { t + h } else { t + C[s] * h };
            k[s] = derivative(drive, ts, &y);
        }
        let mut next = psi;
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = A[6][j];
            if b != 0.0 {
                next = next.axpy(h * b, kj);
            }
        }
        let mut err_state = QubitState {
            amp_e: Complex64::new(0.0, 0.0),
            amp_s: Complex64::new(0.0, 0.0),
        };
        for (j, kj) in k.iter().enumerate() {
            err_state = err_state.axpy(h * E[j], kj);
        }
        let comps = [
            (err_state.amp_e.re, psi.amp_e.re, next.amp_e.re),
            (err_state.amp_e.im, psi.amp_e.im, next.amp_e.im),
            (err_state.amp_s.re, psi.amp_s.re, next.amp_s.re),
            (err_state.amp_s.im, psi.amp_s.im, next.amp_s.im),
        ];
        let err = (comps
            .iter()
            .map(|&(e, y0, y1)| {
                let sc = opts.abs_tol + opts.rel_tol * y0.abs().max(y1.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / 4.0)
            .sqrt();

        if err <= 1.0 {
            t = if last { tau } else { t + h };
            psi = next;
            k[0] = k[6];
            accepted += 1;
            // PI step control
            let fac = 0.9 * err.max(1e-10).powf(-0.14) * prev_err.powf(0.08);
            prev_err = err.max(1e-4);
            h = (h * fac.clamp(0.2, 5.0)).min(h_max);
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < 1e-13 * tau.max(1.0) && t < tau {
            return Err(SolverError::StepUnderflow { t, h });
        }
    }
    Ok((psi, accepted, rejected))
}
