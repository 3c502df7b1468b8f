use approx::assert_relative_eq;
use proptest::prelude::*;

use sap_core::quadrature::integrate_with_breakpoints;
use sap_core::{HshParams, SapTemplate};

prop_compose! {
    fn params()(
        omega in 0.5..8.0f64,
        shape in 0.1..1.5f64,
        edge_rate in 0.1..10.0f64,
        linear_rate in 0.01..10.0f64,
        t1 in 0.1..2.0f64,
        t2 in 0.5..10.0f64,
    ) -> HshParams {
        HshParams::new(omega, shape, edge_rate, linear_rate, t1, t2).unwrap()
    }
}

/// Largest |Δ| on the window.
fn chirp_scale(p: &HshParams) -> f64 {
    p.edge_rate + p.linear_rate * p.center_duration / (2.0 * p.edge_shape)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn segments_join_continuously(p in params()) {
        let h = 1e-9;
        let slope = (p.edge_rate + p.linear_rate) / p.edge_shape;
        for seam in [p.edge_duration, p.edge_duration + p.center_duration] {
            let jump = (p.chirp(seam + h).unwrap() - p.chirp(seam - h).unwrap()).abs();
            prop_assert!(jump <= 4.0 * h * slope + 1e-12 * chirp_scale(&p));
            let ejump = (p.envelope(seam + h).unwrap() - p.envelope(seam - h).unwrap()).abs();
            prop_assert!(ejump <= 4.0 * h * p.omega_max / p.edge_shape + 1e-12 * p.omega_max);
        }
    }

    #[test]
    fn profile_is_symmetric_about_midpoint(p in params(), u in 0.0..1.0f64) {
        let tau = p.duration();
        let t = u * tau;
        let anti = p.chirp(tau - t).unwrap() + p.chirp(t).unwrap();
        prop_assert!(anti.abs() <= 1e-12 * chirp_scale(&p));
        let sym = p.envelope(tau - t).unwrap() - p.envelope(t).unwrap();
        prop_assert!(sym.abs() <= 1e-12 * p.omega_max);
    }

    #[test]
    fn phase_derivative_is_chirp(p in params(), u in 0.01..0.99f64) {
        let t = u * p.duration();
        let h = 1e-5;
        let seams = [p.edge_duration, p.edge_duration + p.center_duration];
        prop_assume!(seams.iter().all(|s| (t - s).abs() > 2.0 * h));
        let numeric = (p.chirp_phase(t + h).unwrap() - p.chirp_phase(t - h).unwrap()) / (2.0 * h);
        prop_assert!((numeric - p.chirp(t).unwrap()).abs() <= 1e-6 * (1.0 + chirp_scale(&p)));
    }

    #[test]
    fn span_is_end_to_end_chirp(p in params()) {
        let span = p.chirp(p.duration()).unwrap() - p.chirp(0.0).unwrap();
        prop_assert!((span - p.chirp_span()).abs() <= 1e-12 * span);
        prop_assert!(p.chirp_span() > 0.0);
    }

    #[test]
    fn envelope_is_bounded_by_peak(p in params(), u in 0.0..1.0f64) {
        let e = p.envelope(u * p.duration()).unwrap();
        prop_assert!(e > 0.0 && e <= p.omega_max * (1.0 + 1e-15));
    }

    #[test]
    fn adjacent_tones_alternate(p in params(), n in 1usize..6) {
        let sap = SapTemplate::new(n).build(&p).unwrap();
        prop_assert!(sap.chirp_signs.windows(2).all(|w| w[1] == -w[0]));
        let same = SapTemplate::new(n).with_same_chirp(true).build(&p).unwrap();
        prop_assert!(same.chirp_signs.iter().all(|&s| s == 1));
        let sum: f64 = sap.tone_offsets.iter().sum();
        prop_assert!(sum.abs() <= 1e-12 * sap.band_width());
    }
}

#[test]
fn phase_matches_quadrature_of_chirp() {
    let p = HshParams::new(4.0, 0.5, 2.0, 2.0, 1.0, 4.0).unwrap();
    for t in [0.3, 1.0, 2.5, 5.0, 5.8] {
        let mut pts: Vec<f64> = [0.0, 1.0, 5.0, t].into_iter().filter(|&x| x <= t).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let q = integrate_with_breakpoints(|s| p.chirp(s).unwrap(), &pts, 1e-14, 0.0).unwrap();
        assert_relative_eq!(
            p.chirp_phase(t).unwrap(),
            q.value,
            epsilon = 1e-12,
            max_relative = 1e-10
        );
    }
}

#[test]
fn midpoint_chirp_vanishes() {
    let p = HshParams::new(4.0, 0.5, 2.0, 2.0, 1.0, 4.0).unwrap();
    assert!(p.chirp(3.0).unwrap().abs() < 1e-15);
}
