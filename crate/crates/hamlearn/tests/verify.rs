//! Verification-engine tests: spectral gaps and pseudoinverse floors against
//! independently computed dense-eigensolver values, exact cat-code decay,
//! the adiabatic 1/gamma ladder, rotation-frequency extraction, and the
//! gamma-calibration search.

use hamlearn::error::Error;
use hamlearn::experiment::EvolutionBackend;
use hamlearn::fock::FockSpace;
use hamlearn::hamiltonian::BosonicHamiltonian;
use hamlearn::linalg::C64;
use hamlearn::lindblad::{standard_dissipation, DissipationSpec, Jump, JumpKind};
use hamlearn::verify::{
    adiabatic_gap, calibrate_gamma, cat_convergence, coherence_probe, effective_ham_decay,
    gap_ladder, loglog_slope, pseudoinverse_norm, spectral_gap, x_rotation_check, Scorecard,
    EDGE_WEIGHT_LIMIT,
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Fixed degree-2 single-mode Hamiltonian shared by the ladder tests.
fn fixture() -> BosonicHamiltonian {
    BosonicHamiltonian::single_mode(
        2,
        [
            ((1u8, 0u8), c(0.12, -0.09)),
            ((0, 1), c(0.12, 0.09)),
            ((2, 0), c(0.10, 0.11)),
            ((0, 2), c(0.10, -0.11)),
            ((1, 1), c(0.85, 0.0)),
        ],
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Spectral gap
// ---------------------------------------------------------------------------

#[test]
fn spectral_gap_of_standard_set_matches_dense_oracle() {
    let jumps = standard_dissipation(0, 2, c(2.0, 0.0)).unwrap();
    let rep = spectral_gap(&jumps, 50).unwrap();
    assert!((rep.value - 3.757886842634).abs() < 1e-6, "got {}", rep.value);
    assert!(rep.value >= 0.95);
    assert!(rep.edge_weight < 1e-8);
    assert!(rep.valid);
}

#[test]
fn spectral_gap_of_plain_photon_loss_is_one() {
    let jumps = vec![Jump::new(0, JumpKind::PhotonLoss { order: 1 })];
    let rep = spectral_gap(&jumps, 40).unwrap();
    assert!((rep.value - 1.0).abs() < 1e-9, "got {}", rep.value);
    assert!(rep.valid);
}

#[test]
fn spectral_gap_of_cat_jump_matches_dense_oracle() {
    let jumps = vec![Jump::new(0, JumpKind::CatCode { order: 2, alpha: c(2.0, 0.0) })];
    let rep = spectral_gap(&jumps, 50).unwrap();
    assert!((rep.value - 13.090799240854).abs() < 1e-6, "got {}", rep.value);
    assert!(rep.value >= 0.95 * 2.0);
    assert!(rep.valid);
}

#[test]
fn spectral_gap_rejects_off_mode_jumps() {
    let jumps = vec![Jump::new(1, JumpKind::PhotonLoss { order: 1 })];
    assert!(spectral_gap(&jumps, 30).is_err());
}

// ---------------------------------------------------------------------------
// Pseudoinverse floors
// ---------------------------------------------------------------------------

#[test]
fn pseudoinverse_floors_match_dense_oracle() {
    let cases = [
        (1usize, c(0.0, 0.0), 40usize, 1.0, 1.0_f64),
        (2, c(1.5, 0.0), 60, 2.432236743717, 2.0),
        (3, c(1.2, 0.0), 70, 2.971202946391, 6.0),
    ];
    for (k, alpha, dim, frozen, kfact) in cases {
        let rep = pseudoinverse_norm(k, alpha, dim).unwrap();
        assert!(
            (rep.sigma_min - frozen).abs() < 1e-6,
            "k={k}: sigma_min {} vs {}",
            rep.sigma_min,
            frozen
        );
        assert!(rep.sigma_min >= 0.95 * kfact.sqrt());
        assert!(
            (rep.commutator_min - kfact).abs() < 1e-9,
            "k={k}: commutator floor {}",
            rep.commutator_min
        );
        assert!(rep.valid, "k={k} contaminated: edge {}", rep.edge_weight);
    }
}

// ---------------------------------------------------------------------------
// Effective-Hamiltonian decay
// ---------------------------------------------------------------------------

#[test]
fn effective_decay_ladder_matches_closed_form() {
    // Closed form in the Gram-Schmidt code basis {|0>, (|a> - s|0>)/t}:
    // off-diagonal s g / t with g = sum_j h_{0j} a^j, diagonal excess
    // s^2 (E - 2 Re g) / t^2; deviation = |d|/2 + sqrt(d^2/4 + |off|^2).
    let table = effective_ham_decay(&fixture(), &[2.0, 3.0, 4.0], 60).unwrap();
    let frozen = [1.312629443182e-1, 1.660145303816e-2, 8.418608269228e-4];
    for (dev, want) in table.deviations.iter().zip(frozen) {
        assert!(
            (dev - want).abs() < 1e-5 * want,
            "deviation {dev} vs closed form {want}"
        );
    }
    for q in &table.envelope_quotients {
        assert!(*q >= 1.0 / 1.5 && *q <= 1.5, "quotient {q} outside envelope slack");
    }
    assert!((table.envelope_quotients[0] - 0.6848).abs() < 1e-2);
    assert!((table.envelope_quotients[1] - 0.9446).abs() < 1e-2);
}

#[test]
fn effective_decay_of_zero_hamiltonian_vanishes() {
    let h = BosonicHamiltonian::single_mode(2, [((1u8, 1u8), c(0.0, 0.0))]).unwrap();
    let table = effective_ham_decay(&h, &[2.0, 3.0], 40).unwrap();
    for dev in &table.deviations {
        assert!(*dev < 1e-10);
    }
}

// ---------------------------------------------------------------------------
// Adiabatic gap
// ---------------------------------------------------------------------------

#[test]
fn adiabatic_gap_vanishes_for_zero_hamiltonian() {
    let space = FockSpace::single(30).unwrap();
    let h = BosonicHamiltonian::single_mode(2, [((1u8, 1u8), c(0.0, 0.0))]).unwrap();
    let h_op = h.to_operator(&space, None).unwrap();
    let jumps = standard_dissipation(0, 1, c(2.0, 0.0)).unwrap();
    let spec = DissipationSpec::new(100.0, jumps).unwrap();
    let rho0 = coherence_probe(&space, &[c(2.0, 0.0)]).unwrap();
    let d = adiabatic_gap(
        &h_op,
        &spec,
        &rho0,
        1.0,
        EvolutionBackend::Implicit { step: 1e-3 },
    )
    .unwrap();
    assert!(d < 1e-8, "distance {d}");
}

#[test]
fn adiabatic_gap_rejects_probes_outside_the_kernel() {
    let space = FockSpace::single(30).unwrap();
    let h_op = fixture().to_operator(&space, None).unwrap();
    let jumps = standard_dissipation(0, 1, c(2.0, 0.0)).unwrap();
    let spec = DissipationSpec::new(100.0, jumps).unwrap();
    // A number state far from span{|0>, |alpha>} leaks badly.
    let mut rho0 = ndarray::Array2::zeros((30, 30));
    rho0[[7, 7]] = c(1.0, 0.0);
    let err = adiabatic_gap(
        &h_op,
        &spec,
        &rho0,
        0.5,
        EvolutionBackend::Implicit { step: 1e-3 },
    );
    assert!(err.is_err());
}

#[test]
fn adiabatic_ladder_is_monotone_with_unit_inverse_slope() {
    let space = FockSpace::single(30).unwrap();
    let h_op = fixture().to_operator(&space, None).unwrap();
    let jumps = standard_dissipation(0, 1, c(2.0, 0.0)).unwrap();
    let rho0 = coherence_probe(&space, &[c(2.0, 0.0)]).unwrap();
    let ladder = gap_ladder(
        &h_op,
        &jumps,
        &[50.0, 100.0, 200.0, 400.0],
        &rho0,
        1.0,
        EvolutionBackend::Implicit { step: 1e-3 },
    )
    .unwrap();
    for w in ladder.points.windows(2) {
        assert!(
            w[1].1 < w[0].1,
            "distance failed to shrink: {:?} -> {:?}",
            w[0],
            w[1]
        );
    }
    assert!(
        ladder.slope >= -1.25 && ladder.slope <= -0.75,
        "slope {} outside [-1.25, -0.75]",
        ladder.slope
    );
}

// ---------------------------------------------------------------------------
// Cat convergence
// ---------------------------------------------------------------------------

#[test]
fn single_photon_weighted_decay_is_exactly_exponential() {
    let space = FockSpace::single(30).unwrap();
    let probe = coherence_probe(&space, &[c(0.8, 0.6)]).unwrap();
    let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.25).collect();
    let rep = cat_convergence(1, c(1.5, 0.0), &probe, &times, 2e-3).unwrap();
    assert!(rep.weighted_ok);
    // d/dt tr[L rho L†] = -tr[L rho L†] exactly for a single first-order jump.
    for (t, q) in rep.times.iter().zip(&rep.weighted_ratio) {
        assert!(
            (q - (-t).exp()).abs() < 1e-3,
            "ratio {q} at t={t} strays from e^-t"
        );
    }
    assert!(rep.fitted_rate > 0.4, "rate {}", rep.fitted_rate);
}

#[test]
fn two_photon_cat_meets_weighted_and_trace_norm_rates() {
    let space = FockSpace::single(30).unwrap();
    let probe = coherence_probe(&space, &[c(1.0, 0.8)]).unwrap();
    let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.25).collect();
    let rep = cat_convergence(2, c(2.0, 0.0), &probe, &times, 2e-3).unwrap();
    assert!(rep.weighted_ok);
    assert!(
        rep.fitted_rate >= 0.4 * 2.0,
        "trace-norm rate {} below 0.8",
        rep.fitted_rate
    );
}

#[test]
fn code_space_probe_never_decays() {
    let space = FockSpace::single(30).unwrap();
    let alpha = c(1.2, 0.0);
    // Even cat: kernel state of b^2 - alpha^2.
    let jumps = vec![Jump::new(0, JumpKind::CatCode { order: 2, alpha })];
    let spec = DissipationSpec::new(1.0, jumps).unwrap();
    let p = spec.kernel_projector(&space).unwrap();
    let coh = coherence_probe(&space, &[alpha]).unwrap();
    let pm = p.matrix();
    let pinned = pm.dot(&coh).dot(pm);
    let trace = hamlearn::linalg::trace(&pinned).re;
    let rho0 = pinned.mapv(|z| z / trace);

    let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
    let rep = cat_convergence(2, alpha, &rho0, &times, 2e-3).unwrap();
    for w in &rep.weighted {
        assert!(*w < 1e-9, "jump weight {w} on a code state");
    }
    for d in &rep.code_distance {
        assert!(*d < 1e-6, "code distance {d} on a code state");
    }
}

#[test]
fn cat_convergence_rejects_bad_time_grids() {
    let space = FockSpace::single(20).unwrap();
    let probe = coherence_probe(&space, &[c(1.0, 0.0)]).unwrap();
    assert!(cat_convergence(1, c(1.0, 0.0), &probe, &[0.5, 1.0], 1e-2).is_err());
    assert!(cat_convergence(1, c(1.0, 0.0), &probe, &[0.0, 1.0, 1.0], 1e-2).is_err());
}

// ---------------------------------------------------------------------------
// X rotation
// ---------------------------------------------------------------------------

#[test]
fn cat_qubit_rotation_frequency_tracks_the_drive() {
    let rep = x_rotation_check(c(2.0, 0.0), 400.0, 30, 1e-3).unwrap();
    assert!((rep.population[0] - 1.0).abs() < 1e-9);
    let want = 4.0;
    assert!(
        (rep.rotation_frequency - want).abs() <= 0.02 * want,
        "rotation frequency {} vs {}",
        rep.rotation_frequency,
        want
    );
}

#[test]
fn rotation_infidelity_shrinks_with_damping() {
    let lo = x_rotation_check(c(2.0, 0.0), 100.0, 30, 1e-3).unwrap();
    let hi = x_rotation_check(c(2.0, 0.0), 400.0, 30, 1e-3).unwrap();
    assert!(
        hi.final_gap < lo.final_gap,
        "gap grew with damping: {} -> {}",
        lo.final_gap,
        hi.final_gap
    );
}

// ---------------------------------------------------------------------------
// Gamma calibration
// ---------------------------------------------------------------------------

#[test]
fn calibration_meets_target_and_scales_with_horizon() {
    let space = FockSpace::single(30).unwrap();
    let h_op = fixture().to_operator(&space, None).unwrap();
    let jumps = standard_dissipation(0, 1, c(2.0, 0.0)).unwrap();
    let rho0 = coherence_probe(&space, &[c(2.0, 0.0)]).unwrap();
    let backend = EvolutionBackend::Implicit { step: 5e-3 };

    let short = calibrate_gamma(&h_op, &jumps, &rho0, 2.5, 0.05, 1e4, backend).unwrap();
    let long = calibrate_gamma(&h_op, &jumps, &rho0, 5.0, 0.05, 1e4, backend).unwrap();
    for cal in [&short, &long] {
        assert!(cal.gamma <= 1e4);
        assert!(cal.distance <= 0.05, "calibrated distance {}", cal.distance);
        assert!(!cal.probes.is_empty());
    }
    let ratio = long.gamma / short.gamma;
    assert!(
        (1.2..=3.5).contains(&ratio),
        "doubling the horizon scaled gamma by {ratio}"
    );

    // The returned gamma reproduces the target when probed again.
    let spec = DissipationSpec::new(long.gamma, jumps).unwrap();
    let d = adiabatic_gap(&h_op, &spec, &rho0, 5.0, backend).unwrap();
    assert!(d <= 0.0505, "re-probe distance {d}");
}

#[test]
fn calibration_rejects_impossible_targets() {
    let space = FockSpace::single(30).unwrap();
    let h_op = fixture().to_operator(&space, None).unwrap();
    let jumps = standard_dissipation(0, 1, c(2.0, 0.0)).unwrap();
    let rho0 = coherence_probe(&space, &[c(2.0, 0.0)]).unwrap();
    let err = calibrate_gamma(
        &h_op,
        &jumps,
        &rho0,
        1.0,
        0.0,
        400.0,
        EvolutionBackend::Implicit { step: 2e-3 },
    );
    match err {
        Err(Error::CalibrationUnreachable { target, ceiling }) => {
            assert_eq!(target, 0.0);
            assert_eq!(ceiling, 400.0);
        }
        other => panic!("expected CalibrationUnreachable, got {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Slope fitting and scorecard plumbing
// ---------------------------------------------------------------------------

#[test]
fn loglog_slope_recovers_exact_power_laws() {
    let points: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .map(|&g| (g, 3.0 / g))
        .collect();
    assert!((loglog_slope(&points) + 1.0).abs() < 1e-12);
    assert!(loglog_slope(&[(1.0, 1.0)]).is_nan());
    assert!(loglog_slope(&[(1.0, -1.0), (2.0, -0.5)]).is_nan());
}

#[test]
fn scorecard_records_bounds_slack_and_contamination() {
    let dir = tempfile::tempdir().unwrap();
    let mut card = Scorecard::new();
    card.push_at_most("bounded", 1.2, 1.0, 1.5);
    card.push_at_least("floored", 2.0, 1.9);
    assert!(card.all_passed());

    card.push_at_least("contaminated", 5.0, 1.0);
    card.set_edge_weight(10.0 * EDGE_WEIGHT_LIMIT);
    assert!(!card.all_passed());
    assert!(!card.checks.last().unwrap().passed);

    card.push_at_most("failing", 2.0, 1.0, 1.5);
    assert!(!card.checks.last().unwrap().passed);

    let json_path = dir.path().join("card.json");
    let csv_path = dir.path().join("card.csv");
    card.write_json(&json_path).unwrap();
    card.write_csv(&csv_path).unwrap();
    let json = std::fs::read_to_string(&json_path).unwrap();
    assert!(json.contains("\"at_most\"") && json.contains("\"edge_weight\""));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("name,kind,value,bound,slack,passed,edge_weight\n"));
    assert_eq!(csv.lines().count(), 1 + card.checks.len());
}

#[test]
fn coherence_probe_is_a_kernel_state() {
    let space = FockSpace::single(30).unwrap();
    let rho0 = coherence_probe(&space, &[c(2.0, 0.0)]).unwrap();
    assert!((hamlearn::linalg::trace(&rho0).re - 1.0).abs() < 1e-10);
    let jumps = standard_dissipation(0, 2, c(2.0, 0.0)).unwrap();
    let spec = DissipationSpec::new(1.0, jumps).unwrap();
    let p = spec.kernel_projector(&space).unwrap();
    let pm = p.matrix();
    let pinned = pm.dot(&rho0).dot(pm);
    assert!(hamlearn::linalg::max_abs(&(&pinned - &rho0)) < 1e-9);
}
