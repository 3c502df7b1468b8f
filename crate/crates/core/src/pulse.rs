//! HSH (hyperbolic-square-hyperbolic) pulse profiles and their assembly into
//! n-tone suture pulses.
//!
//! Units: angular frequencies in rad/µs, times in µs.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PulseError;

/// Numerically stable `ln(cosh(x))`.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn positive(name: &'static str, value: f64) -> Result<f64, PulseError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(PulseError::NonPositive { name, value })
    }
}

/// The scalars defining one HSH profile.
///
/// The chirp has two `tanh` edges of length `edge_duration` around a linear
/// sweep of length `center_duration`; the envelope is `sech` on the edges and
/// flat at `omega_max` in the middle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HshParams {
    /// Peak Rabi frequency Ω.
    pub omega_max: f64,
    /// Edge shape constant T (µs).
    pub edge_shape: f64,
    /// Edge sweep amplitude r.
    pub edge_rate: f64,
    /// Linear sweep scale r₁; the middle-segment slope is r₁/T.
    pub linear_rate: f64,
    /// Duration t₁ of each hyperbolic edge (µs).
    pub edge_duration: f64,
    /// Duration t₂ of the linear segment (µs).
    pub center_duration: f64,
}

impl HshParams {
    pub fn new(
        omega_max: f64,
        edge_shape: f64,
        edge_rate: f64,
        linear_rate: f64,
        edge_duration: f64,
        center_duration: f64,
    ) -> Result<Self, PulseError> {
        let p = Self {
            omega_max,
            edge_shape,
            edge_rate,
            linear_rate,
            edge_duration,
            center_duration,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds params from the total duration τ; t₂ = τ − 2t₁.
    pub fn with_total_duration(
        omega_max: f64,
        edge_shape: f64,
        edge_rate: f64,
        linear_rate: f64,
        edge_duration: f64,
        total: f64,
    ) -> Result<Self, PulseError> {
        positive("edge_duration", edge_duration)?;
        positive("total_duration", total)?;
        if total <= 2.0 * edge_duration {
            return Err(PulseError::DurationTooShort {
                total,
                edge: edge_duration,
            });
        }
        Self::new(
            omega_max,
            edge_shape,
            edge_rate,
            linear_rate,
            edge_duration,
            total - 2.0 * edge_duration,
        )
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        positive("omega_max", self.omega_max)?;
        positive("edge_shape", self.edge_shape)?;
        positive("edge_rate", self.edge_rate)?;
        positive("linear_rate", self.linear_rate)?;
        positive("edge_duration", self.edge_duration)?;
        positive("center_duration", self.center_duration)?;
        Ok(())
    }

    /// Total duration τ = 2t₁ + t₂.
    pub fn duration(&self) -> f64 {
        2.0 * self.edge_duration + self.center_duration
    }

    fn check(&self, t: f64) -> Result<(), PulseError> {
        if (0.0..=self.duration()).contains(&t) {
            Ok(())
        } else {
            Err(PulseError::OutOfDomain {
                t,
                duration: self.duration(),
            })
        }
    }

    /// Half the linear-segment span, r₁t₂/(2T); the chirp value at the seams.
    fn seam_offset(&self) -> f64 {
        self.linear_rate * self.center_duration / (2.0 * self.edge_shape)
    }

    /// Chirp Δ(t).
    pub fn chirp(&self, t: f64) -> Result<f64, PulseError> {
        self.check(t)?;
        Ok(self.chirp_unchecked(t))
    }

    /// Envelope Ω̄(t).
    pub fn envelope(&self, t: f64) -> Result<f64, PulseError> {
        self.check(t)?;
        Ok(self.envelope_unchecked(t))
    }

    /// Closed-form ∫₀ᵗ Δ(t′) dt′.
    pub fn chirp_phase(&self, t: f64) -> Result<f64, PulseError> {
        self.check(t)?;
        Ok(self.chirp_phase_unchecked(t))
    }

    /// Δ(τ) − Δ(0) = 2r·tanh(t₁/T) + r₁t₂/T.
    pub fn chirp_span(&self) -> f64 {
        2.0 * self.edge_rate * (self.edge_duration / self.edge_shape).tanh()
            + self.linear_rate * self.center_duration / self.edge_shape
    }

    pub(crate) fn chirp_unchecked(&self, t: f64) -> f64 {
        let (t1, t2, tt) = (self.edge_duration, self.center_duration, self.edge_shape);
        if t < t1 {
            self.edge_rate * ((t - t1) / tt).tanh() - self.seam_offset()
        } else if t <= t1 + t2 {
            self.linear_rate * (t - t1 - 0.5 * t2) / tt
        } else {
            self.edge_rate * ((t - t1 - t2) / tt).tanh() + self.seam_offset()
        }
    }

    pub(crate) fn envelope_unchecked(&self, t: f64) -> f64 {
        let (t1, t2, tt) = (self.edge_duration, self.center_duration, self.edge_shape);
        if t < t1 {
            self.omega_max * sech((t - t1) / tt)
        } else if t <= t1 + t2 {
            self.omega_max
        } else {
            self.omega_max * sech((t - t1 - t2) / tt)
        }
    }

    pub(crate) fn chirp_phase_unchecked(&self, t: f64) -> f64 {
        let (t1, t2, tt, r) = (
            self.edge_duration,
            self.center_duration,
            self.edge_shape,
            self.edge_rate,
        );
        let c = self.seam_offset();
        // value at t1 (and again at t1 + t2, the linear part integrates to zero)
        let seam = -r * tt * ln_cosh(t1 / tt) - c * t1;
        if t < t1 {
            r * tt * (ln_cosh((t - t1) / tt) - ln_cosh(t1 / tt)) - c * t
        } else if t <= t1 + t2 {
            let u = t - t1;
            seam + self.linear_rate / tt * (0.5 * u * u - 0.5 * t2 * u)
        } else {
            let v = t - t1 - t2;
            seam + r * tt * ln_cosh(v / tt) + c * v
        }
    }
}

/// How per-tone phases φₘ are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    Zero,
    Fixed(Vec<f64>),
    /// i.i.d. uniform in [0, 2π) from a ChaCha8 stream.
    Random {
        seed: u64,
    },
}

impl PhasePolicy {
    pub fn phases(&self, n: usize) -> Result<Vec<f64>, PulseError> {
        match self {
            PhasePolicy::Zero => Ok(vec![0.0; n]),
            PhasePolicy::Fixed(v) if v.len() == n => Ok(v.clone()),
            PhasePolicy::Fixed(v) => Err(PulseError::PhaseCount {
                expected: n,
                got: v.len(),
            }),
            PhasePolicy::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(random_phases(&mut rng, n))
            }
        }
    }
}

pub(crate) fn random_phases<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
}

/// Layout of a suture pulse independent of the HSH profile it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SapTemplate {
    pub n_components: usize,
    /// Amplitude factor per extra pass; tone m is scaled by attenuationᵐ⁻¹.
    pub attenuation: f64,
    pub phases: PhasePolicy,
    /// Window-shift error δ_f (f → f + δ_f).
    pub delta_f: f64,
    /// All tones chirp in the same direction instead of alternating.
    pub same_chirp: bool,
}

impl Default for SapTemplate {
    fn default() -> Self {
        Self {
            n_components: 1,
            attenuation: 0.95,
            phases: PhasePolicy::Zero,
            delta_f: 0.0,
            same_chirp: false,
        }
    }
}

impl SapTemplate {
    pub fn new(n_components: usize) -> Self {
        Self {
            n_components,
            ..Self::default()
        }
    }

    pub fn with_attenuation(mut self, attenuation: f64) -> Self {
        self.attenuation = attenuation;
        self
    }

    pub fn with_phases(mut self, phases: PhasePolicy) -> Self {
        self.phases = phases;
        self
    }

    pub fn with_delta_f(mut self, delta_f: f64) -> Self {
        self.delta_f = delta_f;
        self
    }

    pub fn with_same_chirp(mut self, same_chirp: bool) -> Self {
        self.same_chirp = same_chirp;
        self
    }

    pub fn build(&self, params: &HshParams) -> Result<SapPulse, PulseError> {
        build_sap(params, self)
    }
}

/// An assembled n-tone suture pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SapPulse {
    pub base: HshParams,
    pub n_components: usize,
    /// Inter-tone spacing f + δ_f.
    pub window_width: f64,
    /// ωₘ − ω₀ for m = 1..n.
    pub tone_offsets: Vec<f64>,
    pub chirp_signs: Vec<i8>,
    pub amplitude_scales: Vec<f64>,
    pub tone_phases: Vec<f64>,
    pub delta_f_shift: f64,
}

impl SapPulse {
    pub fn duration(&self) -> f64 {
        self.base.duration()
    }

    /// Total covered band n·(f + δ_f).
    pub fn band_width(&self) -> f64 {
        self.n_components as f64 * self.window_width
    }

    /// Detunings of the boundaries between adjacent windows.
    pub fn suture_points(&self) -> Vec<f64> {
        self.tone_offsets
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }
}

/// Assembles an n-component suture pulse whose windows connect at the chirp
/// span of `params` (shifted by the template's δ_f).
pub fn build_sap(params: &HshParams, template: &SapTemplate) -> Result<SapPulse, PulseError> {
    params.validate()?;
    let n = template.n_components;
    if n < 1 {
        return Err(PulseError::NoComponents(n));
    }
    let a = template.attenuation;
    if !(a > 0.0 && a <= 1.0) {
        return Err(PulseError::Attenuation(a));
    }
    let span = params.chirp_span();
    let width = span + template.delta_f;
    if !template.delta_f.is_finite() || width <= 0.0 {
        return Err(PulseError::WindowCollapsed {
            shift: template.delta_f,
            span,
        });
    }
    let center = 0.5 * (n as f64 + 1.0);
    let tone_offsets = (1..=n).map(|m| (center - m as f64) * width).collect();
    let chirp_signs = (1..=n)
        .map(|m| {
            if template.same_chirp || m % 2 == 1 {
                1
            } else {
                -1
            }
        })
        .collect();
    let amplitude_scales = (0..n).map(|k| a.powi(k as i32)).collect();
    Ok(SapPulse {
        base: *params,
        n_components: n,
        window_width: width,
        tone_offsets,
        chirp_signs,
        amplitude_scales,
        tone_phases: template.phases.phases(n)?,
        delta_f_shift: template.delta_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2a(t2: f64) -> HshParams {
        HshParams::new(4.0, 0.5, 2.0, 2.0, 1.0, t2).unwrap()
    }

    #[test]
    fn chirp_vanishes_at_midpoint() {
        let p = fig2a(4.0);
        assert!(p.chirp(1.0 + 2.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn chirp_seam_matches_both_segments() {
        let p = fig2a(4.0);
        let expected = -p.linear_rate * p.center_duration / (2.0 * p.edge_shape);
        assert_relative_eq!(p.chirp(1.0).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(p.chirp(1.0 - 1e-13).unwrap(), expected, epsilon = 1e-11);
        let upper = p.chirp(5.0).unwrap();
        assert_relative_eq!(p.chirp(5.0 + 1e-13).unwrap(), upper, epsilon = 1e-11);
        assert_relative_eq!(upper, -expected, epsilon = 1e-14);
    }

    #[test]
    fn chirp_at_start() {
        // -2 tanh(2) - 8
        let p = fig2a(4.0);
        assert_relative_eq!(
            p.chirp(0.0).unwrap(),
            -9.928_055_160_151_633,
            epsilon = 1e-12
        );
    }

    #[test]
    fn envelope_values() {
        let p = fig2a(4.0);
        assert_eq!(p.envelope(1.0).unwrap(), 4.0);
        assert_relative_eq!(
            p.envelope(0.0).unwrap(),
            1.063_208_915_336_319,
            epsilon = 1e-12
        );
        assert_eq!(p.envelope(3.0).unwrap(), 4.0);
    }

    #[test]
    fn out_of_window_is_rejected() {
        let p = fig2a(4.0);
        assert!(matches!(
            p.chirp(-1e-9),
            Err(PulseError::OutOfDomain { .. })
        ));
        assert!(p.envelope(6.0 + 1e-9).is_err());
        assert!(p.chirp_phase(7.0).is_err());
    }

    #[test]
    fn chirp_phase_closes() {
        let p = fig2a(4.0);
        assert_eq!(p.chirp_phase(0.0).unwrap(), 0.0);
        assert!(p.chirp_phase(p.duration()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn chirp_span_formula() {
        let p = fig2a(4.0);
        assert_relative_eq!(p.chirp_span(), 19.856_110_320_303_266, epsilon = 1e-12);
        let tiny = HshParams::new(4.0, 0.5, 2.0, 1e-12, 1.0, 1e-12).unwrap();
        assert_relative_eq!(tiny.chirp_span(), 4.0 * 2f64.tanh(), epsilon = 1e-9);
    }

    #[test]
    fn total_duration_constructor() {
        let p = HshParams::with_total_duration(2.0, 0.35, 1.2, 0.7, 1.0, 6.0).unwrap();
        assert_eq!(p.center_duration, 4.0);
        assert!(matches!(
            HshParams::with_total_duration(2.0, 0.35, 1.2, 0.7, 1.0, 1.5),
            Err(PulseError::DurationTooShort { .. })
        ));
        assert!(HshParams::new(2.0, -0.35, 1.2, 0.7, 1.0, 4.0).is_err());
    }

    #[test]
    fn sap1_is_single_centered_tone() {
        let sap = SapTemplate::new(1).build(&fig2a(4.0)).unwrap();
        assert_eq!(sap.tone_offsets, vec![0.0]);
        assert_eq!(sap.amplitude_scales, vec![1.0]);
        assert_eq!(sap.chirp_signs, vec![1]);
        assert!(sap.suture_points().is_empty());
    }

    #[test]
    fn sap2_offsets_and_attenuation() {
        let p = fig2a(4.0);
        let f = p.chirp_span();
        let sap = SapTemplate::new(2)
            .with_attenuation(0.95)
            .build(&p)
            .unwrap();
        assert_eq!(sap.tone_offsets, vec![0.5 * f, -0.5 * f]);
        assert_eq!(sap.amplitude_scales, vec![1.0, 0.95]);
        assert_eq!(sap.chirp_signs, vec![1, -1]);
        assert_eq!(sap.suture_points(), vec![0.0]);
    }

    #[test]
    fn sap3_offsets() {
        let p = fig2a(4.0);
        let f = p.chirp_span();
        let sap = SapTemplate::new(3).build(&p).unwrap();
        assert_eq!(sap.tone_offsets, vec![f, 0.0, -f]);
        assert_eq!(sap.chirp_signs, vec![1, -1, 1]);
        let same = SapTemplate::new(3).with_same_chirp(true).build(&p).unwrap();
        assert_eq!(same.chirp_signs, vec![1, 1, 1]);
    }

    #[test]
    fn window_shift_applies_to_spacing() {
        let p = fig2a(4.0);
        let f = p.chirp_span();
        let sap = SapTemplate::new(2).with_delta_f(0.5).build(&p).unwrap();
        assert_relative_eq!(sap.window_width, f + 0.5);
        assert_relative_eq!(sap.tone_offsets[0] - sap.tone_offsets[1], f + 0.5);
        assert!(SapTemplate::new(2).with_delta_f(-f).build(&p).is_err());
    }

    #[test]
    fn build_rejects_bad_layout() {
        let p = fig2a(4.0);
        assert_eq!(
            SapTemplate::new(0).build(&p),
            Err(PulseError::NoComponents(0))
        );
        assert!(SapTemplate::new(2).with_attenuation(0.0).build(&p).is_err());
        assert!(SapTemplate::new(2)
            .with_attenuation(1.01)
            .build(&p)
            .is_err());
        assert!(SapTemplate::new(2)
            .with_phases(PhasePolicy::Fixed(vec![0.0]))
            .build(&p)
            .is_err());
    }

    #[test]
    fn random_phases_are_seeded() {
        let a = PhasePolicy::Random { seed: 7 }.phases(4).unwrap();
        let b = PhasePolicy::Random { seed: 7 }.phases(4).unwrap();
        let c = PhasePolicy::Random { seed: 8 }.phases(4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&x| (0.0..2.0 * PI).contains(&x)));
    }

    #[test]
    fn ln_cosh_is_stable() {
        assert_relative_eq!(ln_cosh(0.3), 0.3f64.cosh().ln(), epsilon = 1e-15);
        assert_relative_eq!(ln_cosh(-800.0), 800.0 - LN_2, epsilon = 1e-12);
    }
}
