//! Calibrates the shot-count constants. Part one finds the smallest `C0` in
//! `C0 * 4^w * ln(2n/δ) / ε^2` for which estimates of random 2-qubit states
//! land within `eps` (trace norm) at rate `1 - δ`. Part two fits the constant
//! each width from 1 to 8 needs and checks the stored table against it; it
//! draws batch histograms instead of single shots.
//!
//! Run: `cargo run --release --example calibrate_shadows -- [trials]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trivphase::lattice::region;
use trivphase::linalg::random_density;
use trivphase::shadows::{
    calibrated_samples, collect_shadow_histogram, collect_shadows, estimate_marginal, required_samples_with,
    WIDTH_CALIBRATION,
};
use trivphase::state::{trace_distance, DensityMatrix};

fn main() {
    let trials: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let (eps, delta, n, w) = (0.1, 0.05, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let states: Vec<DensityMatrix> =
        (0..trials).map(|_| DensityMatrix::new(vec![0, 1], random_density(4, 4, &mut rng)).unwrap()).collect();
    for c0 in [0.5, 1.0, 2.0, 3.0, 4.0] {
        let m = required_samples_with(c0, n, w, eps, delta).unwrap();
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        for (t, s) in states.iter().enumerate() {
            let ds = collect_shadows(s, m, 1000 + t as u64).unwrap();
            let est = estimate_marginal(&ds, &region([0, 1]), eps).unwrap();
            let d = trace_distance(&est.estimate, s).unwrap();
            worst = worst.max(d);
            if d <= eps {
                ok += 1;
            }
        }
        let rate = ok as f64 / trials as f64;
        println!("C0 = {c0:<5} M = {m:<7} success {rate:.3} worst {worst:.4}");
    }

    // width sweep: iterate the constant until the 95th-percentile error is eps
    let eps = 0.05;
    for w in 1..=8usize {
        let runs = if w >= 7 { 20 } else { 60 };
        let states: Vec<DensityMatrix> = (0..runs)
            .map(|_| DensityMatrix::new((0..w).collect(), random_density(1 << w, 1 << w, &mut rng)).unwrap())
            .collect();
        let mut c = 2f64.powi(w as i32);
        for it in 0..3u64 {
            let m = (required_samples_with(1.0, w, w, eps, delta).unwrap() as f64 * c) as u64;
            let mut errs: Vec<f64> = states
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let h = collect_shadow_histogram(s, m, it * 1000 + t as u64).unwrap();
                    trace_distance(&h.estimate_marginal(&s.region()).unwrap(), s).unwrap()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            let q = errs[(0.95 * runs as f64).ceil() as usize - 1] / eps;
            c *= q * q;
        }
        let m = calibrated_samples(w, w, eps, delta).unwrap();
        let ok = states
            .iter()
            .enumerate()
            .filter(|(t, s)| {
                let h = collect_shadow_histogram(s, m, 9000 + *t as u64).unwrap();
                trace_distance(&h.estimate_marginal(&s.region()).unwrap(), s).unwrap() <= eps
            })
            .count();
        println!("w = {w}: fitted constant {c:.2}, table {:.1}, success at table M {:.3}", WIDTH_CALIBRATION[w - 1], ok as f64 / runs as f64);
    }
}
