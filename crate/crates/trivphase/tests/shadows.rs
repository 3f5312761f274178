use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trivphase::lattice::region;
use trivphase::linalg::{self, random_density, Mat, C64};
use trivphase::shadows::*;
use trivphase::state::{trace_distance, DensityMatrix};

fn plus() -> DensityMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::pure(vec![0], &[C64::new(h, 0.0), C64::new(h, 0.0)]).unwrap()
}

#[test]
fn dataset_has_exactly_m_records() {
    let ds = collect_shadows(&DensityMatrix::zero_state(&region([0, 1])), 1234, 1).unwrap();
    assert_eq!(ds.shots(), 1234);
    assert!(collect_shadows(&plus(), 0, 1).is_err());
}

#[test]
fn z_expectation_on_plus_is_within_binomial_band() {
    let ds = collect_shadows(&plus(), 100_000, 5).unwrap();
    let mut sum = 0.0f64;
    let mut k = 0.0f64;
    for i in 0..ds.shots() {
        let (b, o) = ds.record(i);
        if b[0] == Basis::Z {
            sum += if o[0] == 0 { 1.0 } else { -1.0 };
            k += 1.0;
        }
    }
    let mean = sum / k;
    assert!(mean.abs() < 5.0 / k.sqrt(), "mean {mean} over {k} shots");
}

#[test]
fn single_qubit_snapshot_mean_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rho = DensityMatrix::new(vec![0], random_density(2, 2, &mut rng)).unwrap();
    let m = 1_000_000;
    let ds = collect_shadows(&rho, m, 12).unwrap();
    // snapshot 3|s><s| - I, built from the eigenvectors of the measured Pauli
    let mut acc = linalg::zeros(2, 2);
    for i in 0..m {
        let (b, o) = ds.record(i);
        let sign = if o[0] == 0 { 1.0 } else { -1.0 };
        let p = trivphase::channel::pauli(b[0] as usize);
        acc += (Mat::identity(2, 2) + p * C64::new(3.0 * sign, 0.0)).unscale(2.0);
    }
    let mean = acc.unscale(m as f64);
    let sigma = (3.0 / m as f64).sqrt();
    for r in 0..2 {
        for c in 0..2 {
            assert!((mean[(r, c)] - rho.mat[(r, c)]).norm() < 5.0 * sigma, "entry ({r},{c})");
        }
    }
}

#[test]
fn product_single_site_estimates_are_accurate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = DensityMatrix::new(vec![0], random_density(2, 2, &mut rng)).unwrap();
    let b = DensityMatrix::new(vec![1], random_density(2, 1, &mut rng)).unwrap();
    let rho = a.tensor(&b).unwrap();
    let mut fails = 0;
    for t in 0..20 {
        let ds = collect_shadows(&rho, 100_000, 100 + t).unwrap();
        let est = estimate_marginal(&ds, &region([1]), 0.05).unwrap();
        if trace_distance(&est.estimate, &b).unwrap() > 0.05 {
            fails += 1;
        }
    }
    assert_eq!(fails, 0);
}

#[test]
fn zero_state_estimates_are_near_zero_projector() {
    let rho = DensityMatrix::zero_state(&region([0, 1, 2, 3]));
    let ds = collect_shadows(&rho, 100_000, 9).unwrap();
    for r in [region([0, 1]), region([1, 2, 3])] {
        let est = estimate_marginal(&ds, &r, 0.05).unwrap();
        let truth = exact_marginal_oracle(&rho, &r).unwrap();
        assert!(trace_distance(&est.estimate, &truth).unwrap() <= 0.05);
    }
}

#[test]
fn empty_region_is_scalar_one() {
    let ds = collect_shadows(&plus(), 10, 1).unwrap();
    let est = estimate_marginal(&ds, &region([]), 0.1).unwrap();
    assert_eq!(est.estimate.dim(), 1);
    assert!((est.estimate.mat[(0, 0)].re - 1.0).abs() < 1e-15);
}

#[test]
fn oversized_or_foreign_regions_are_rejected() {
    let ds = collect_shadows(&DensityMatrix::zero_state(&region(0..10)), 10, 1).unwrap();
    assert!(estimate_marginal(&ds, &region(0..9), 0.1).is_err());
    assert!(estimate_marginal(&ds, &region([12]), 0.1).is_err());
}

#[test]
fn projection_at_most_doubles_the_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..10 {
        let rho = DensityMatrix::new(vec![0, 1], random_density(4, 1 + t % 4, &mut rng)).unwrap();
        let ds = collect_shadows(&rho, 2_000, t as u64).unwrap();
        let r = region([0, 1]);
        let raw = operator_from_pauli(&pauli_coefficients(&ds, &r).unwrap(), 2);
        let proj = estimate_marginal(&ds, &r, 0.1).unwrap().estimate;
        let raw_err = linalg::trace_norm_herm(&linalg::hermitian_part(&(raw - &rho.mat)));
        assert!(trace_distance(&proj, &rho).unwrap() <= 2.0 * raw_err + 1e-12);
    }
}

#[test]
fn subregion_estimates_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rho = DensityMatrix::new(vec![0, 1, 2], random_density(8, 2, &mut rng)).unwrap();
    let ds = collect_shadows(&rho, 100_000, 3).unwrap();
    let big = estimate_marginal(&ds, &region([0, 1]), 0.1).unwrap().estimate;
    let small = estimate_marginal(&ds, &region([1]), 0.05).unwrap().estimate;
    let traced = big.partial_trace(&region([1])).unwrap();
    assert!(trace_distance(&traced, &small).unwrap() <= 0.15);
}

#[test]
fn binary_format_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rho = DensityMatrix::new(vec![2, 5, 7], random_density(8, 3, &mut rng)).unwrap();
    let ds = collect_shadows(&rho, 37, 42).unwrap();
    let mut buf = Vec::new();
    ds.write_binary(&mut buf).unwrap();
    assert_eq!(buf.len(), 4 + 8 + 8 + 12 + (37 * 3usize).div_ceil(4) + (37 * 3usize).div_ceil(8));
    assert_eq!(ShadowDataset::read_binary(&buf[..]).unwrap(), ds);
}

#[test]
fn exact_oracle_is_partial_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = DensityMatrix::new(vec![0, 1, 2], random_density(8, 8, &mut rng)).unwrap();
    let r = region([0, 2]);
    assert_eq!(exact_marginal_oracle(&rho, &r).unwrap(), rho.partial_trace(&r).unwrap());
    let src = MarginalSource::Exact(rho.clone());
    assert_eq!(src.marginal(&r).unwrap(), rho.partial_trace(&r).unwrap());
}

#[test]
fn sample_count_scaling() {
    let m = required_samples(10, 2, 0.1, 0.05).unwrap();
    let half = required_samples(10, 2, 0.2, 0.05).unwrap();
    assert!((m as f64 / half as f64 - 4.0).abs() < 4.0 / half as f64 + 1e-9);
    let wider = required_samples(10, 3, 0.1, 0.05).unwrap();
    assert!((wider as f64 / m as f64 - 4.0).abs() < 4.0 / m as f64 + 1e-9);
    assert!(required_samples(0, 2, 0.1, 0.05).is_err());
}

proptest! {
    #[test]
    fn simplex_projection_lands_on_simplex(v in prop::collection::vec(-2.0f64..2.0, 1..12)) {
        let p = project_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        let again = project_simplex(&p);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn required_samples_is_monotone(n in 1usize..50, w in 1usize..6, eps in 0.01f64..0.5, delta in 0.01f64..0.5) {
        let m = required_samples(n, w, eps, delta).unwrap();
        prop_assert!(required_samples(n + 1, w, eps, delta).unwrap() >= m);
        prop_assert!(required_samples(n, w + 1, eps, delta).unwrap() >= m);
        prop_assert!(required_samples(n, w, eps * 0.9, delta).unwrap() >= m);
        prop_assert!(required_samples(n, w, eps, delta * 0.9).unwrap() >= m);
    }

    #[test]
    fn estimates_are_valid_states(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = DensityMatrix::new(vec![0, 1], random_density(4, 2, &mut rng)).unwrap();
        let ds = collect_shadows(&rho, 50, seed).unwrap();
        let est = estimate_marginal(&ds, &region([0, 1]), 0.1).unwrap();
        prop_assert!(est.estimate.check(1e-9).is_ok());
    }
}

#[test]
fn outcome_table_rows_are_born_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let state = DensityMatrix::new(vec![0, 1, 2], random_density(8, 3, &mut rng)).unwrap();
    let table = pauli_outcome_table(&state);
    assert_eq!(table.len(), 27 * 8);
    for row in table.chunks(8) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // all-Z row is the computational-basis diagonal; basis digits are Z = 2
    let zzz = 2 + 2 * 3 + 2 * 9;
    for o in 0..8 {
        assert!((table[zzz * 8 + o] - state.mat[(o, o)].re).abs() < 1e-12);
    }
}

#[test]
fn aggregated_records_give_the_same_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let state = DensityMatrix::new(vec![0, 1, 2, 3], random_density(16, 2, &mut rng)).unwrap();
    let ds = collect_shadows(&state, 2_003, 5).unwrap();
    let hist = ShadowHistogram::from_dataset(&ds);
    for r in [region([1]), region([0, 2]), region([1, 2, 3]), region([0, 1, 2, 3])] {
        let a = pauli_coefficients(&ds, &r).unwrap();
        let b = hist.pauli_coefficients(&r).unwrap();
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "{r:?}: {worst}");
    }
}

#[test]
fn drawn_histograms_match_simulated_shots_in_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let state = DensityMatrix::new(vec![0, 1, 2], random_density(8, 2, &mut rng)).unwrap();
    let r = region([0, 2]);
    let truth = state.partial_trace(&r).unwrap();
    let (m, runs) = (1_000usize, 60u64);
    let err = |est: DensityMatrix| trace_distance(&est, &truth).unwrap();
    let shots: Vec<f64> = (0..runs).map(|s| err(estimate_marginal(&collect_shadows(&state, m, s).unwrap(), &r, 0.1).unwrap().estimate)).collect();
    let drawn: Vec<f64> = (0..runs).map(|s| err(collect_shadow_histogram(&state, m as u64, 1000 + s).unwrap().estimate_marginal(&r).unwrap())).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&shots), mean(&drawn));
    assert!((a - b).abs() < 0.2 * a.max(b), "shots {a} drawn {b}");
    let h = collect_shadow_histogram(&state, 12_345, 1).unwrap();
    assert_eq!(h.counts.iter().map(|c| c.iter().sum::<u64>()).sum::<u64>(), 12_345);
}

#[test]
fn multinomial_preserves_the_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let counts = multinomial(10_000_000_000, &[0.2, 0.0, 0.5, 0.3], &mut rng).unwrap();
    assert_eq!(counts.iter().sum::<u64>(), 10_000_000_000);
    assert_eq!(counts[1], 0);
    assert!((counts[2] as f64 / 1e10 - 0.5).abs() < 1e-4);
}
