use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trivphase::covering::{build_covering, MapKind};
use trivphase::existence::recovery_existence;
use trivphase::factory::{make_noisy_target, make_unitary_target};
use trivphase::lattice::Lattice;
use trivphase::learner::replacement_channel;
use trivphase::linalg::random_density;
use trivphase::pipeline::*;
use trivphase::shadows::MarginalSource;
use trivphase::state::{trace_distance, DensityMatrix};

fn product_state(n: usize, seed: u64) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DensityMatrix::new(vec![0], random_density(2, 2, &mut rng)).unwrap();
    for site in 1..n {
        state = state.tensor(&DensityMatrix::new(vec![site], random_density(2, 2, &mut rng)).unwrap()).unwrap();
    }
    state
}

fn run(state: &DensityMatrix, n: usize, learner: Learner) -> (GenerationCircuit, LearnReport, ErrorBudget) {
    let lat = Lattice::chain(n);
    let plan = build_covering(&lat, 1, 6).unwrap();
    let budget = make_budget(0.1, n, 1, 1).unwrap();
    let (w, r) = learn(&MarginalSource::Exact(state.clone()), &lat, &budget, &plan, learner).unwrap();
    (w, r, budget)
}

#[test]
fn budget_examples() {
    let b = make_budget(0.8, 10, 1, 1).unwrap();
    assert!((b.eps_li - 0.01).abs() < 1e-15);
    assert_eq!(b.eps_lt, b.eps_li);
    assert_eq!(b.eps_sdp, b.eps_li);
    assert!((b.eps_lr - 0.8 / 800.0).abs() < 1e-15);
    assert_eq!(make_budget(8.0, 1, 1, 1).unwrap().eps_li, 1.0);
    assert!(make_budget(0.0, 4, 1, 1).is_err());
    assert!(make_budget(0.1, 0, 1, 1).is_err());
}

proptest! {
    #[test]
    fn threshold_is_epsilon_over_n(eps in 1e-6f64..2.0, n in 1usize..1000, d in 1usize..5) {
        let b = make_budget(eps, n, d, 1).unwrap();
        prop_assert!((b.threshold - eps / n as f64).abs() <= 1e-15 * eps);
        prop_assert!((b.eps_li * 8.0 * n as f64 - eps).abs() <= 1e-14 * eps);
    }
}

#[test]
fn product_target_is_learned_exactly() {
    let state = product_state(6, 1);
    let (w, report, budget) = run(&state, 6, Learner::PetzBaseline);
    assert_eq!(report.flag, Flag::Success);
    assert_eq!(w.layers.len(), 2);
    for s in &report.steps {
        assert!(s.achieved.unwrap() < 1e-7, "step {} achieved {:?}", s.step, s.achieved);
    }
    let out = generate(&w).unwrap();
    assert!(trace_distance(&out, &state).unwrap() < 1e-7);
    assert!(verify(&w, &state, &budget).unwrap().pass);
}

#[test]
fn unitary_depth_one_chain_of_eight() {
    let prep = make_unitary_target(5, &Lattice::chain(8), 1, 2).unwrap();
    let (w, report, budget) = run(&prep.rho, 8, Learner::PetzBaseline);
    assert_eq!(report.flag, Flag::Success);
    let v = verify(&w, &prep.rho, &budget).unwrap();
    assert!(v.pass && v.distance < 1e-6, "{v:?}");
    // telescoping: the global error is at most the sum of the step errors
    let total: f64 = report.steps.iter().map(|s| s.achieved.unwrap()).sum();
    assert!(v.distance <= total + 1e-8, "{} vs {total}", v.distance);
}

#[test]
fn noisy_target_meets_the_circuit_bound() {
    let lat = Lattice::chain(6);
    let prep = make_noisy_target(6, &lat, 1, 2, 0.1).unwrap();
    let (w, report, budget) = run(&prep.rho, 6, Learner::PetzBaseline);
    assert_eq!(report.flag, Flag::Success);
    let v = verify(&w, &prep.rho, &budget).unwrap();
    let n = 6.0;
    let depth = prep.depth() as f64;
    assert!(v.distance <= 8.0 * n * n * depth * prep.certified_eps_lr + 1e-8);
    let total: f64 = report.steps.iter().map(|s| s.achieved.unwrap()).sum();
    assert!(v.distance <= total + 1e-8);
}

#[test]
fn layer_one_maps_commute() {
    let state = product_state(6, 2);
    let (w, _, _) = run(&state, 6, Learner::PetzBaseline);
    let mut swapped = w.clone();
    swapped.layers[0].reverse();
    let a = generate(&w).unwrap();
    let b = generate(&swapped).unwrap();
    assert!((a.mat - b.mat).norm() < 1e-12);
}

#[test]
fn corrupted_circuit_fails_verification() {
    let prep = make_noisy_target(11, &Lattice::chain(6), 1, 2, 0.05).unwrap();
    let (mut w, report, budget) = run(&prep.rho, 6, Learner::PetzBaseline);
    assert_eq!(report.flag, Flag::Success);
    let last = w.layers[1][0].clone();
    replace_map(&mut w, last.step, reset_map(&last.c).unwrap()).unwrap();
    let v = verify(&w, &prep.rho, &budget).unwrap();
    assert!(!v.pass);
    // the corrupted patch is left in |0>; its weight is the distance of ρ_C from |0><0|
    let rho_c = prep.rho.partial_trace(&last.c).unwrap();
    let weight = trace_distance(&rho_c, &DensityMatrix::zero_state(&last.c)).unwrap();
    assert!(v.distance >= weight - 1e-9, "{} vs {weight}", v.distance);
}

#[test]
fn bell_pair_across_the_gap_fails_with_witness() {
    let lat = Lattice::chain(8);
    let plan = build_covering(&lat, 1, 6).unwrap();
    let pair = bridging_pair(&plan).unwrap();
    let state = bell_obstruction_state(&lat, pair, 4).unwrap();
    let budget = make_budget(0.1, 8, 1, 1).unwrap();
    let out = one_way_test(&MarginalSource::Exact(state), &lat, &budget, &plan, Learner::PetzBaseline).unwrap();
    assert_eq!(out.flag, Flag::Fail);
    let wit = out.witness.unwrap();
    assert_ne!(wit.kind, MapKind::Initialize);
    assert!(wit.patch.contains(&pair.0) && wit.patch.contains(&pair.1));
    assert!(wit.achieved.unwrap() > 1.0, "{:?}", wit.achieved);
    let (text, csv) = report_render(&out.report).unwrap();
    let first_row = text.lines().nth(2).unwrap();
    assert!(first_row.trim_start().starts_with("FAIL"), "{text}");
    assert!(text.contains(ONE_WAY_NOTE));
    assert!(csv.lines().any(|l| l.ends_with(",false")));
}

#[test]
fn undersized_width_is_caught_at_layer_one() {
    let prep = make_unitary_target(9, &Lattice::chain(6), 2, 2).unwrap();
    let (_, report, _) = run(&prep.rho, 6, Learner::PetzBaseline);
    assert_eq!(report.flag, Flag::Fail);
    assert_eq!(report.witness().unwrap().kind, MapKind::Initialize);
}

#[test]
fn reports_are_deterministic_and_round_trip() {
    let prep = make_noisy_target(3, &Lattice::chain(6), 1, 2, 0.1).unwrap();
    let (w1, r1, _) = run(&prep.rho, 6, Learner::PetzBaseline);
    let (w2, r2, _) = run(&prep.rho, 6, Learner::PetzBaseline);
    assert_eq!(r1.to_json().unwrap(), r2.to_json().unwrap());
    assert_eq!(w1.to_json().unwrap(), w2.to_json().unwrap());
    let back: LearnReport = serde_json::from_str(&r1.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), r1.to_json().unwrap());
    let wb = GenerationCircuit::from_json(&w1.to_json().unwrap()).unwrap();
    assert_eq!(wb.to_json().unwrap(), w1.to_json().unwrap());
}

#[test]
fn empty_report_renders_header_only_csv() {
    let r = LearnReport {
        flag: Flag::Success,
        steps: vec![],
        s: 1,
        patch: 6,
        learner: Learner::Sdp,
        shots: 0,
        total_distance: None,
        seconds: 0.0,
    };
    let (_, csv) = report_render(&r).unwrap();
    assert_eq!(csv.trim_end(), "step,layer,kind,patch sites,achieved,threshold,pass");
}

#[test]
fn sdp_learner_falls_back_above_its_cap() {
    let state = product_state(6, 5);
    let (_, report, _) = run(&state, 6, Learner::Sdp);
    assert_eq!(report.flag, Flag::Success);
    let rec = report.steps.iter().find(|s| s.kind == MapKind::Recover).unwrap();
    assert!(rec.note.contains("SDP cap"), "{}", rec.note);
}

fn existence_circuit(prep: &trivphase::factory::ReversiblePreparation, s: usize) -> (GenerationCircuit, f64) {
    let lat = prep.lattice.clone();
    let plan = build_covering(&lat, s, 4 * s + 2).unwrap();
    let mut layers: Vec<Vec<PlacedMap>> = vec![Vec::new(), Vec::new()];
    let mut bound = 0.0f64;
    for st in &plan.steps {
        let body = if st.kind == MapKind::Initialize {
            let rho_c = prep.rho.partial_trace(&st.parts.c).unwrap();
            MapBody::Choi(replacement_channel(&rho_c).unwrap())
        } else {
            let chk = recovery_existence(prep, &st.parts.a, &st.parts.b, &st.parts.c, s).unwrap();
            assert!(chk.holds);
            bound = bound.max(chk.bound);
            MapBody::Existence(chk.map)
        };
        layers[st.layer - 1].push(PlacedMap {
            step: st.index,
            layer: st.layer,
            kind: st.kind,
            b: st.parts.b.clone(),
            c: st.parts.c.clone(),
            e: st.parts.e.clone(),
            body,
        });
    }
    (GenerationCircuit { lattice: lat, layers }, bound)
}

#[test]
fn existence_maps_substituted_for_learned_ones_verify() {
    let n = 10;
    let budget = make_budget(0.1, n, 1, 1).unwrap();
    let unitary = make_unitary_target(12, &Lattice::chain(n), 1, 2).unwrap();
    let (w, bound) = existence_circuit(&unitary, 2);
    let v = verify(&w, &unitary.rho, &budget).unwrap();
    assert!(v.pass && v.distance <= w.map_count() as f64 * bound + 1e-8, "{v:?} bound {bound}");

    // noisy maps are only as good as the measured inversion error
    let noisy = make_noisy_target(12, &Lattice::chain(n), 1, 2, 0.1).unwrap();
    let (w, bound) = existence_circuit(&noisy, 2);
    let v = verify(&w, &noisy.rho, &budget).unwrap();
    assert!(v.distance <= w.map_count() as f64 * bound + 1e-8, "{v:?} bound {bound}");
}
