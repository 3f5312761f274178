use proptest::prelude::*;

use trivphase::lattice::{region, Region};
use trivphase::learner::{
    cptp_residual, petz_baseline_extension, solve_fidelity_sdp, Certificate, RecoveryProblem,
};
use trivphase::recovery::PetzKind;
use trivphase::state::DensityMatrix;
use trivphase::Error;

mod common;
use common::*;

#[test]
fn sdp_matches_brute_force_optimum() {
    for (seed, rank) in [(3u64, 2usize), (11, 1), (4, 8)] {
        let state = random_state(vec![0, 1, 2], rank, seed);
        let problem =
            RecoveryProblem::from_state(&state, &region([0]), &region([1]), &region([2]), &Region::new(), 1e-6).unwrap();
        let learned = solve_fidelity_sdp(&problem).unwrap();
        let oracle = brute_force_optimum(&problem.input.mat, &problem.target.mat, 3, seed);
        assert!(
            (learned.fidelity - oracle).abs() < 1e-4 || learned.fidelity > oracle,
            "seed {seed}: sdp {} oracle {oracle}",
            learned.fidelity
        );
        assert!(oracle <= learned.upper_bound + 1e-6, "oracle {oracle} above bound {}", learned.upper_bound);
        assert!(learned.upper_bound - learned.fidelity < 1e-4);
    }
}

#[test]
fn sdp_output_is_a_channel() {
    let state = random_state(vec![0, 1, 2, 3], 3, 5);
    let problem =
        RecoveryProblem::from_state(&state, &region([0]), &region([1]), &region([2]), &region([3]), 1e-6).unwrap();
    let learned = solve_fidelity_sdp(&problem).unwrap();
    assert_eq!(learned.choi.input, vec![1, 3]);
    assert_eq!(learned.choi.output, vec![1, 2]);
    assert!(learned.residuals.psd_violation < 1e-8);
    assert!(learned.residuals.tp_violation < 1e-8);
    let again = cptp_residual(&learned.choi);
    assert_eq!(again, learned.residuals);
}

#[test]
fn markov_state_is_recovered_exactly() {
    // ρ_{A B1} ⊗ ρ_{B2 C}: the B2 half alone carries all correlations with C
    let left = random_state(vec![0, 1], 4, 21);
    let right = random_state(vec![2, 3], 4, 22);
    let state = left.tensor(&right).unwrap();
    let problem =
        RecoveryProblem::from_state(&state, &region([0]), &region([1, 2]), &region([3]), &Region::new(), 1e-6).unwrap();
    let sdp = solve_fidelity_sdp(&problem).unwrap();
    let petz = petz_baseline_extension(&problem, PetzKind::Plain).unwrap();
    assert!(sdp.fidelity > 1.0 - 1e-6, "sdp {}", sdp.fidelity);
    assert!(petz.fidelity > 1.0 - 1e-8, "petz {}", petz.fidelity);
    assert!(petz.distance < 1e-6);
}

#[test]
fn relabeling_sites_does_not_change_the_optimum() {
    let state = random_state(vec![0, 1, 2], 2, 8);
    let p = RecoveryProblem::from_state(&state, &region([0]), &region([1]), &region([2]), &Region::new(), 1e-6).unwrap();
    // the same state with roles carried by sites 2, 0, 1
    let perm = trivphase::linalg::permute_qubits(&state.mat, &[1, 2, 0]);
    let moved = DensityMatrix::new(vec![0, 1, 2], perm).unwrap();
    let q = RecoveryProblem::from_state(&moved, &region([2]), &region([0]), &region([1]), &Region::new(), 1e-6).unwrap();
    let check = moved.partial_trace(&region([2])).unwrap();
    let orig_a = state.partial_trace(&region([0])).unwrap();
    assert!((check.mat - orig_a.mat).norm() < 1e-12, "permutation convention");
    let (a, b) = (solve_fidelity_sdp(&p).unwrap(), solve_fidelity_sdp(&q).unwrap());
    assert!((a.fidelity - b.fidelity).abs() < 1e-6, "{} vs {}", a.fidelity, b.fidelity);
}

#[test]
fn oversized_problems_hit_the_dimension_cap() {
    let state = random_state((0..6).collect(), 1, 2);
    let r = RecoveryProblem::from_state(&state, &region([0, 1]), &region([2, 3]), &region([4, 5]), &Region::new(), 1e-6)
        .unwrap();
    assert!(matches!(solve_fidelity_sdp(&r), Err(Error::DimensionCap { .. })));
    // the Petz baseline has no such cap
    let petz = petz_baseline_extension(&r, PetzKind::Plain).unwrap();
    assert!(petz.residuals.tp_violation < 1e-8);
}

#[test]
fn overlapping_roles_are_rejected() {
    let state = random_state(vec![0, 1, 2], 1, 2);
    let r = RecoveryProblem::from_state(&state, &region([0]), &region([0, 1]), &region([2]), &Region::new(), 1e-6);
    assert!(r.is_err());
}

#[test]
fn iteration_log_is_csv() {
    let state = random_state(vec![0, 1, 2], 2, 4);
    let p = RecoveryProblem::from_state(&state, &region([0]), &region([1]), &region([2]), &Region::new(), 1e-6).unwrap();
    let learned = solve_fidelity_sdp(&p).unwrap();
    let mut buf = Vec::new();
    learned.write_log(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,objective,gap"));
    assert_eq!(lines.count(), learned.log.len());
    assert!(matches!(learned.certificate, Certificate::DualityGap | Certificate::PetzFallback));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sdp_never_loses_to_petz(seed in 0u64..10_000, rank in 1usize..=4, with_e in any::<bool>()) {
        let sites: Vec<usize> = if with_e { vec![0, 1, 2, 3] } else { vec![0, 1, 2] };
        let state = random_state(sites, rank, seed);
        let e = if with_e { region([3]) } else { Region::new() };
        let p = RecoveryProblem::from_state(&state, &region([0]), &region([1]), &region([2]), &e, 1e-6).unwrap();
        let sdp = solve_fidelity_sdp(&p).unwrap();
        let petz = petz_baseline_extension(&p, PetzKind::Plain).unwrap();
        prop_assert!(sdp.fidelity >= petz.fidelity - 1e-7, "sdp {} petz {}", sdp.fidelity, petz.fidelity);
        prop_assert!(sdp.fidelity <= sdp.upper_bound + 1e-9);
        prop_assert!(sdp.residuals.psd_violation < 1e-8 && sdp.residuals.tp_violation < 1e-8);
    }
}
