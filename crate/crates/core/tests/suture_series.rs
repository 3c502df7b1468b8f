use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use sap_core::suture::{
    crossing_times, leibniz_tail_bound, lobes_in_linear_segment, phi_numeric, phi_series,
    suture_fidelity, theta, theta_rate,
};
use sap_core::{evolve_compact_sap2, HshParams, SolverOptions};

fn fig6() -> HshParams {
    HshParams::new(3.0, 0.4, 1.5, 2.0, 0.5, 5.0).unwrap()
}

prop_compose! {
    fn params()(
        omega in 1.0..5.0f64,
        shape in 0.2..0.8f64,
        edge_rate in 0.5..3.0f64,
        linear_rate in 0.5..3.0f64,
        t1 in 0.3..1.5f64,
        t2 in 2.0..8.0f64,
    ) -> HshParams {
        HshParams::new(omega, shape, edge_rate, linear_rate, t1, t2).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn suture_fidelity_is_exact(p in params()) {
        let exact = suture_fidelity(&p).unwrap();
        let solved = evolve_compact_sap2(&p, 0.0, &SolverOptions::default()).unwrap();
        prop_assert!((exact - solved).abs() < 1e-6, "{exact} vs {solved}");
    }

    #[test]
    fn partial_sums_bracket_and_obey_tail_bound(p in params()) {
        let Ok(s) = phi_series(&p, 200) else { return Ok(()) };
        let limit = s.limit();
        let last = s.estimate();
        for n in 0..s.terms.len() {
            let (a, b) = (s.partial_sums[n], s.partial_sums[n + 1]);
            prop_assert!(limit >= a.min(b) - 1e-12 && limit <= a.max(b) + 1e-12);
            if let Some(bound) = leibniz_tail_bound(&s, n) {
                prop_assert!((last - s.partial_sums[n]).abs() <= bound + 1e-12);
            }
        }
        for w in s.terms.windows(2) {
            prop_assert!(w[0] * w[1] < 0.0 && w[1].abs() < w[0].abs());
        }
    }

    #[test]
    fn theta_is_monotone(p in params()) {
        let tau = p.duration();
        let mut prev = theta(&p, 0.0).unwrap();
        for k in 1..=400 {
            let t = (tau * k as f64 / 400.0).min(tau);
            let th = theta(&p, t).unwrap();
            prop_assert!(th >= prev - 1e-12);
            prop_assert!(theta_rate(&p, t).unwrap() >= -1e-12);
            prev = th;
        }
    }
}

#[test]
fn linear_segment_crossings_follow_quadratic_phase() {
    let p = fig6();
    let t1 = p.edge_duration;
    let a = p.linear_rate / (2.0 * p.edge_shape);
    let th1 = theta(&p, t1).unwrap();
    let rate1 = theta_rate(&p, t1).unwrap();
    let crossings = crossing_times(&p, 200);
    let mut checked = 0;
    for (k, &t) in crossings.iter().enumerate() {
        if t <= t1 || t >= t1 + p.center_duration {
            continue;
        }
        // θ(t₁ + s) = θ(t₁) + θ'(t₁)·s + a·s²
        let level = FRAC_PI_2 + k as f64 * PI;
        let s = (-rate1 + (rate1 * rate1 + 4.0 * a * (level - th1)).sqrt()) / (2.0 * a);
        assert!(
            (t - (t1 + s)).abs() < 1e-9,
            "crossing {k}: {t} vs {}",
            t1 + s
        );
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn tail_bound_vanishes_asymptotically() {
    let s = phi_series(&fig6(), 4000).unwrap();
    for k in [10usize, 100, 1000, 3999] {
        let asymptotic =
            0.5 * s.omega_max * (PI / s.a) / (2.0 * (s.b * s.b + (k + 1) as f64 * PI / s.a).sqrt());
        let bound = leibniz_tail_bound(&s, k).unwrap();
        assert!((bound - asymptotic).abs() / bound < 0.05 + 2.0 / (k as f64));
    }
    assert!(leibniz_tail_bound(&s, 3999).unwrap() < 0.02);
}

#[test]
fn series_starts_after_edge_at_a_maximum() {
    let p = fig6();
    let s = phi_series(&p, 20).unwrap();
    assert!(s.t0 > p.edge_duration);
    let th = theta(&p, s.t0).unwrap();
    assert!(((th - FRAC_PI_2) / (2.0 * PI)).fract().abs() < 1e-9);
    assert!((s.phi_t0 - phi_numeric(&p, s.t0).unwrap()).abs() < 1e-12);
    let h = 1e-3;
    assert!(phi_numeric(&p, s.t0 - h).unwrap() < s.phi_t0);
    assert!(phi_numeric(&p, s.t0 + h).unwrap() < s.phi_t0);
    assert!(lobes_in_linear_segment(&s, &p) >= 2);
}
