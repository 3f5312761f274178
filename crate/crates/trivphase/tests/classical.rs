use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trivphase::choi::{choi_apply, identity_choi_mat};
use trivphase::classical::*;
use trivphase::covering::{build_covering, MapKind};
use trivphase::lattice::{region, Lattice, Region};
use trivphase::pipeline::{bridging_pair, learn, make_budget, Flag, Learner};
use trivphase::shadows::MarginalSource;
use trivphase::state::trace_distance;

/// Smallest `|P_ABC - Ψ(P_AB)|_1` over all stochastic `Ψ: B -> BC`, one binary site each.
fn lp_optimum(p: &ClassicalDistribution) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    // psi[b'][b + 2c]
    let psi: Vec<Vec<_>> = (0..2).map(|_| (0..4).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect()).collect();
    for col in &psi {
        lp.add_constraint(col.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    }
    let p_ab = p.marginal(&region([0, 1])).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let t = lp.add_var(1.0, (0.0, f64::INFINITY));
                let target = p.probs[a + 2 * b + 4 * c];
                // t >= ±(target - Σ_b' P(a, b') psi[b'][b + 2c])
                let mut plus = vec![(t, 1.0)];
                let mut minus = vec![(t, 1.0)];
                for bp in 0..2 {
                    let w = p_ab.probs[a + 2 * bp];
                    plus.push((psi[bp][b + 2 * c], w));
                    minus.push((psi[bp][b + 2 * c], -w));
                }
                lp.add_constraint(plus, ComparisonOp::Ge, target);
                lp.add_constraint(minus, ComparisonOp::Ge, -target);
            }
        }
    }
    lp.solve().unwrap().into_solution().unwrap().objective()
}

fn recovery_error(p: &ClassicalDistribution) -> f64 {
    let gate = classical_recovery(p, &region([1]), &region([2])).unwrap();
    map_error(&gate, &p.marginal(&region([0, 1])).unwrap(), p).unwrap()
}

#[test]
fn conditional_recovery_against_the_lp_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap = 0.0f64;
    for _ in 0..50 {
        let p = ClassicalDistribution::random(vec![0, 1, 2], 2, &mut rng).unwrap();
        let opt = lp_optimum(&p);
        let cond = recovery_error(&p);
        assert!(cond >= opt - 1e-9, "conditional {cond} beats the LP optimum {opt}");
        worst_gap = worst_gap.max(cond - opt);
    }
    // the conditional map is a feasible point, not always the L1 optimum
    assert!(worst_gap > 0.0);

    let markov = random_markov_chain(3, 2, 0, 3).unwrap();
    assert!(lp_optimum(&markov) < 1e-9);
    assert!(recovery_error(&markov) < 1e-12);
}

#[test]
fn product_recovery_appends_the_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = ClassicalDistribution::random(vec![0, 1], 2, &mut rng).unwrap();
    let c = ClassicalDistribution::random(vec![2], 2, &mut rng).unwrap();
    let p = a.tensor(&c).unwrap();
    let g = classical_recovery(&p, &region([1]), &region([2])).unwrap();
    for b in 0..2 {
        for out in 0..4 {
            let expect = if out % 2 == b { c.probs[out / 2] } else { 0.0 };
            assert!((g.t[(out, b)] - expect).abs() < 1e-14);
        }
    }
    assert!(recovery_error(&p) < 1e-14);
}

#[test]
fn zero_mass_conditions_fall_back_to_uniform() {
    // site 1 is never 1
    let p = ClassicalDistribution::new(vec![1, 2], 2, vec![0.3, 0.0, 0.7, 0.0]).unwrap();
    let g = classical_recovery(&p, &region([1]), &region([2])).unwrap();
    assert_eq!(g.t[(1, 1)], 0.5);
    assert_eq!(g.t[(3, 1)], 0.5);
    assert!(g.stochastic_residual() < 1e-15);
}

#[test]
fn extension_with_empty_e_is_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = ClassicalDistribution::random(vec![0, 1, 2, 3], 2, &mut rng).unwrap();
    let r = classical_recovery(&p, &region([1]), &region([2])).unwrap();
    let e = classical_extension(&p, &region([1]), &region([2]), &Region::new()).unwrap();
    assert_eq!(r, e);
    let with_e = classical_extension(&p, &region([1]), &region([2]), &region([3])).unwrap();
    assert_eq!(with_e.input, vec![1, 3]);
    assert_eq!(with_e.output, vec![1, 2]);
}

#[test]
fn markov_field_extension_is_exact_and_gibbs_chain_is_close() {
    let p = random_markov_chain(6, 2, 0, 9).unwrap();
    // A = {0}, B = {1, 2}, C = {3}, E = {4}
    let g = classical_extension(&p, &region([1, 2]), &region([3]), &region([4])).unwrap();
    let target = p.marginal(&region([0, 1, 2, 3])).unwrap();
    let input = p.marginal(&region([0, 1, 2, 4])).unwrap();
    assert!(map_error(&g, &input, &target).unwrap() < 1e-10);

    let gibbs = ising_chain(10, 0.2, 0.1).unwrap();
    let budget = make_budget(0.1, 10, 1, 1).unwrap();
    let g = classical_extension(&gibbs, &region([2, 3]), &region([4, 5]), &region([7])).unwrap();
    let target = gibbs.marginal(&region([0, 1, 2, 3, 4, 5])).unwrap();
    let input = gibbs.marginal(&region([0, 1, 2, 3, 7])).unwrap();
    let err = map_error(&g, &input, &target).unwrap();
    assert!(err <= budget.threshold, "{err}");
}

#[test]
fn embedding_identity_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let p = ClassicalDistribution::random(vec![0, 1, 2], 2, &mut rng).unwrap();
        let sites = if i % 2 == 0 { vec![0, 2] } else { vec![1] };
        let t = TransitionGate::random(sites, 2, &mut rng).unwrap();
        let quantum = embed_channel(&t).unwrap().apply(&embed_diag(&p).unwrap()).unwrap();
        let classical = embed_diag(&t.apply_placed(&p).unwrap()).unwrap();
        assert!((quantum.mat - classical.mat).camax() < 1e-12);
    }
    // a map onto fresh sites goes through the Choi form
    let p = ClassicalDistribution::random(vec![0, 1, 2], 2, &mut rng).unwrap();
    let g = classical_extension(&p, &region([1]), &region([2]), &Region::new()).unwrap();
    let ab = p.marginal(&region([0, 1])).unwrap();
    let quantum = choi_apply(&embed_choi(&g).unwrap(), &embed_diag(&ab).unwrap()).unwrap();
    let classical = embed_diag(&g.apply(&ab).unwrap()).unwrap();
    assert!((quantum.mat - classical.mat).camax() < 1e-12);
}

#[test]
fn trivial_embeddings() {
    let u = embed_diag(&ClassicalDistribution::uniform(vec![0], 2).unwrap()).unwrap();
    assert!((u.mat[(0, 0)].re - 0.5).abs() < 1e-15 && (u.mat[(1, 1)].re - 0.5).abs() < 1e-15);
    // the identity embeds as full dephasing: the identity channel on diagonal states only
    let id = embed_choi(&TransitionGate::identity(vec![3], 2).unwrap()).unwrap();
    let full = identity_choi_mat(2);
    for r in 0..4 {
        for c in 0..4 {
            let expect = if r == c && (r == 0 || r == 3) { full[(r, c)] } else { C64::new(0.0, 0.0) };
            assert!((id.mat[(r, c)] - expect).norm() < 1e-15);
        }
    }
    assert!(embed_channel(&classical_recovery(&ClassicalDistribution::uniform(vec![0, 1], 2).unwrap(), &region([0]), &region([1])).unwrap())
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn learned_maps_are_stochastic(seed in 0u64..10_000, nb in 1usize..3, q in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = nb + 2;
        let p = ClassicalDistribution::random((0..n).collect(), q, &mut rng).unwrap();
        let b: Region = (0..nb).collect();
        let g = classical_extension(&p, &b, &region([nb]), &region([nb + 1])).unwrap();
        prop_assert!(g.stochastic_residual() < 1e-12);
        prop_assert!(g.t.iter().all(|&v| v >= 0.0));
        // composing gates stays a distribution
        let out = g.apply_placed(&p).unwrap();
        prop_assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn chain_plan(n: usize) -> (Lattice, trivphase::covering::CoveringPlan) {
    let lat = Lattice::chain(n);
    let plan = build_covering(&lat, 1, 6).unwrap();
    (lat, plan)
}

#[test]
fn product_distribution_is_learned_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ClassicalDistribution::random(vec![0], 2, &mut rng).unwrap();
    for s in 1..8 {
        p = p.tensor(&ClassicalDistribution::random(vec![s], 2, &mut rng).unwrap()).unwrap();
    }
    let (lat, plan) = chain_plan(8);
    let budget = make_budget(0.1, 8, 1, 1).unwrap();
    let (w, report) = learn_classical(&ClassicalSource::Exact(p.clone()), &lat, &budget, &plan).unwrap();
    assert_eq!(report.flag, Flag::Success);
    assert_eq!(w.layers.len(), 2);
    let v = verify_classical(&w, &p, &budget).unwrap();
    assert!(v.pass && v.tv < 1e-12, "{v:?}");
}

#[test]
fn segmented_markov_chain_of_sixteen_is_learned() {
    let p = random_markov_chain(16, 2, 3, 21).unwrap();
    let (lat, plan) = chain_plan(16);
    let budget = make_budget(0.1, 16, 1, 1).unwrap();
    let (w, report) = learn_classical(&ClassicalSource::Exact(p.clone()), &lat, &budget, &plan).unwrap();
    assert_eq!(report.flag, Flag::Success);
    let v = verify_classical(&w, &p, &budget).unwrap();
    assert!(v.tv <= 1e-8, "{v:?}");
}

#[test]
fn correlated_far_pair_fails_at_the_bridging_step() {
    let (lat, plan) = chain_plan(8);
    let pair = bridging_pair(&plan).unwrap();
    let p = correlated_pair_distribution(&lat, pair, 2, 3).unwrap();
    let budget = make_budget(0.1, 8, 1, 1).unwrap();
    let (_, report) = learn_classical(&ClassicalSource::Exact(p), &lat, &budget, &plan).unwrap();
    assert_eq!(report.flag, Flag::Fail);
    let wit = report.witness().unwrap();
    assert_ne!(wit.kind, MapKind::Initialize);
    assert!(wit.patch.contains(&pair.0) && wit.patch.contains(&pair.1));
    assert!(wit.achieved.unwrap() > 0.5);
}

#[test]
fn quantum_pipeline_on_the_diagonal_embedding_agrees() {
    for seed in [1u64, 2] {
        let p = random_markov_chain(6, 2, 0, seed).unwrap();
        let (lat, plan) = chain_plan(6);
        let budget = make_budget(0.5, 6, 1, 1).unwrap();
        let (cw, cr) = learn_classical(&ClassicalSource::Exact(p.clone()), &lat, &budget, &plan).unwrap();
        let rho = embed_diag(&p).unwrap();
        let (qw, qr) = learn(&MarginalSource::Exact(rho.clone()), &lat, &budget, &plan, Learner::PetzBaseline).unwrap();
        assert_eq!(cr.flag, qr.flag);
        assert_eq!(cr.steps.len(), qr.steps.len());
        for (c, q) in cr.steps.iter().zip(&qr.steps) {
            assert!((c.achieved.unwrap() - q.achieved.unwrap()).abs() < 1e-8, "step {}: {:?} vs {:?}", c.step, c.achieved, q.achieved);
        }
        if cr.flag == Flag::Success {
            let tv = generate_classical(&cw).unwrap().tv(&p).unwrap();
            let qd = trace_distance(&trivphase::pipeline::generate(&qw).unwrap(), &rho).unwrap();
            assert!((2.0 * tv - qd).abs() < 1e-8, "{tv} vs {qd}");
        }
    }
}

#[test]
fn empirical_tables() {
    let det = ClassicalDistribution::point_mass(vec![0, 1, 2], 2, &[1, 0, 1]).unwrap();
    let one = det.samples(1, 0);
    let tables = estimate_marginals_from_samples(vec![0, 1, 2], 2, &one, &[region([0, 2]), region([1])]).unwrap();
    assert_eq!(tables[0], det.marginal(&region([0, 2])).unwrap());
    assert_eq!(tables[1], det.marginal(&region([1])).unwrap());

    let coin = ClassicalDistribution::uniform(vec![0], 2).unwrap();
    let trials = 200;
    let good = (0..trials)
        .filter(|&t| coin.sample_counts(10_000, t).unwrap().marginal(&region([0])).unwrap().tv(&coin).unwrap() <= 0.03)
        .count();
    assert!(good as f64 >= 0.99 * trials as f64, "{good}/{trials}");
}

#[test]
fn quadrupling_samples_halves_the_median_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ClassicalDistribution::random(vec![0, 1, 2], 2, &mut rng).unwrap();
    let median = |m: u64| {
        let mut errs: Vec<f64> = (0..201).map(|s| p.sample_counts(m, 1000 + s).unwrap().marginal(&p.region()).unwrap().tv(&p).unwrap()).collect();
        errs.sort_by(f64::total_cmp);
        errs[100]
    };
    let ratio = median(40_000) / median(10_000);
    assert!((0.4..0.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn multinomial_counts_match_explicit_samples() {
    let p = random_markov_chain(4, 2, 0, 8).unwrap();
    let explicit = EmpiricalCounts::from_samples(p.sites.clone(), 2, &p.samples(200_000, 1)).unwrap();
    let drawn = p.sample_counts(200_000, 2).unwrap();
    let (a, b) = (explicit.marginal(&p.region()).unwrap(), drawn.marginal(&p.region()).unwrap());
    assert!(a.tv(&p).unwrap() < 0.01 && b.tv(&p).unwrap() < 0.01);
}

#[test]
fn files_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = ClassicalDistribution::random(vec![1, 4, 5], 3, &mut rng).unwrap();
    assert_eq!(ClassicalDistribution::from_json(&p.to_json().unwrap()).unwrap(), p);
    let g = TransitionGate::random(vec![0, 2], 3, &mut rng).unwrap();
    assert_eq!(TransitionGate::from_json(&g.to_json().unwrap()).unwrap(), g);
    let samples = p.samples(50, 3);
    assert_eq!(read_samples(&write_samples(&samples)).unwrap(), samples);
    assert!(TransitionGate::new(vec![0], vec![0], 2, DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.5])).is_err());
}

#[test]
fn sample_mode_learns_the_segmented_chain() {
    let n = 16;
    let p = random_markov_chain(n, 2, 3, 21).unwrap();
    let (lat, plan) = chain_plan(n);
    let budget = make_budget(0.05, n, 1, 1).unwrap();
    let widest = plan
        .steps
        .iter()
        .map(|st| trivphase::pipeline::buffer_region(&lat, 1, st).union(&st.parts.bcde()).count())
        .max()
        .unwrap();
    let m = required_samples_classical(2, widest, 2 * plan.steps.len(), budget.threshold / 4.0, 0.05).unwrap();
    let counts = p.sample_counts(m, 17).unwrap();
    let (w, report) = learn_classical(&ClassicalSource::Counts(counts), &lat, &budget, &plan).unwrap();
    assert_eq!(report.flag, Flag::Success, "{:?}", report.witness());
    let v = verify_classical(&w, &p, &budget).unwrap();
    assert!(v.tv <= 0.05, "{v:?}");
}
