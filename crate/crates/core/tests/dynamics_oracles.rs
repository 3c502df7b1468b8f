use std::f64::consts::PI;

use proptest::prelude::*;

use sap_core::analysis::{detuning_sweep, uniform_grid};
use sap_core::{
    evolve, evolve_compact_sap2, transfer_fidelity, transfer_probability, ConstantDrive, HshParams,
    LinearSweep, QubitState, RotatingFrameHamiltonian, SapTemplate, SolverOptions,
};

/// Finite-window sweep probabilities (rabi, rate, half-window / rabi, P)
/// from a 40-digit reference integration of the same Hamiltonian.
const SWEEP_REFERENCE: [(f64, f64, f64, f64); 4] = [
    (2.0, 4.0, 10.0, 0.812_041_517_000_847_97),
    (2.0, 4.0, 20.0, 0.783_971_346_886_912_92),
    (2.0, 2.0, 10.0, 0.988_004_448_525_545_58),
    (1.0, 1.0, 15.0, 0.798_667_519_794_898),
];

#[test]
fn linear_sweep_matches_reference() {
    let opts = SolverOptions::default();
    for (rabi, rate, windows, exact) in SWEEP_REFERENCE {
        let p = transfer_probability(&LinearSweep::over_window(rabi, rate, windows * rabi), &opts)
            .unwrap();
        assert!((p - exact).abs() < 1e-7, "{p} vs {exact}");
    }
}

#[test]
fn wider_window_approaches_landau_zener() {
    let opts = SolverOptions::default();
    let lz = 1.0 - (-PI * 4.0 / 8.0f64).exp();
    let narrow = transfer_probability(&LinearSweep::over_window(2.0, 4.0, 20.0), &opts).unwrap();
    let wide = transfer_probability(&LinearSweep::over_window(2.0, 4.0, 40.0), &opts).unwrap();
    assert!((wide - lz).abs() < (narrow - lz).abs());
}

#[test]
fn resonant_rabi_oscillation() {
    let opts = SolverOptions::default();
    for k in 1..=20 {
        let tau = 0.37 * k as f64;
        let rabi = 2.3;
        let f = transfer_probability(
            &ConstantDrive {
                rabi,
                detuning: 0.0,
                duration: tau,
            },
            &opts,
        )
        .unwrap();
        assert!((f - (0.5 * rabi * tau).sin().powi(2)).abs() < 1e-8);
    }
}

#[test]
fn two_tone_map_is_symmetric_in_detuning() {
    let p = HshParams::with_total_duration(2.0, 0.35, 1.2, 0.7, 1.0, 6.0).unwrap();
    let sap = SapTemplate::new(2).with_attenuation(1.0).build(&p).unwrap();
    let f = p.chirp_span();
    let grid = uniform_grid(-f, f, 21);
    let map = detuning_sweep(&sap, &grid, &SolverOptions::default()).unwrap();
    let row = &map.values[0];
    for i in 0..grid.len() {
        let (a, b) = (row[i].unwrap(), row[grid.len() - 1 - i].unwrap());
        assert!((a - b).abs() < 1e-8, "δ = {}: {a} vs {b}", grid[i]);
    }
}

#[test]
fn multi_tone_and_compact_forms_agree() {
    let p = HshParams::new(4.0, 0.5, 2.0, 2.0, 1.0, 4.0).unwrap();
    let sap = SapTemplate::new(2).with_attenuation(1.0).build(&p).unwrap();
    let opts = SolverOptions::default();
    for d in uniform_grid(-20.0, 20.0, 9) {
        let a = transfer_fidelity(&sap, d, &opts).unwrap();
        let b = evolve_compact_sap2(&p, d, &opts).unwrap();
        assert!((a - b).abs() < 1e-6);
    }
}

prop_compose! {
    fn config()(
        omega in 1.0..5.0f64,
        shape in 0.2..0.8f64,
        edge_rate in 0.5..3.0f64,
        linear_rate in 0.5..3.0f64,
        t1 in 0.3..1.5f64,
        t2 in 2.0..6.0f64,
        n in 1usize..=3,
        u in -0.5..0.5f64,
    ) -> RotatingFrameHamiltonian {
        let p = HshParams::new(omega, shape, edge_rate, linear_rate, t1, t2).unwrap();
        let sap = SapTemplate::new(n).build(&p).unwrap();
        let d = u * sap.band_width();
        RotatingFrameHamiltonian::new(sap, d)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn adaptive_agrees_with_fine_fixed_step(h in config()) {
        let a = evolve(&h, QubitState::excited(), &SolverOptions::default()).unwrap();
        let b = evolve(&h, QubitState::excited(), &SolverOptions::fixed_rk4(200_000)).unwrap();
        prop_assert!(1.0 - a.state.overlap(&b.state).norm_sqr() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_preserved(h in config()) {
        let run = evolve(&h, QubitState::excited(), &SolverOptions::default()).unwrap();
        prop_assert!(run.norm_drift < 1e-6);
        let f = run.state.target_population();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f));
    }
}
