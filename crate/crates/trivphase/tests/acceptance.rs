//! Acceptance suite: one PASS/FAIL line per criterion.
//! Run with `cargo test --test acceptance -- --nocapture` to see the table.

mod common;

use trivphase::checks::{self, CheckOutcome};
use trivphase::learner::RecoveryProblem;
use trivphase::pipeline::{make_budget, Learner};
use trivphase::shadows::{calibrated_samples, required_samples};

fn oracle(problem: &RecoveryProblem) -> f64 {
    common::brute_force_optimum(&problem.input.mat, &problem.target.mat, 2, 17)
}

#[test]
fn acceptance() {
    let mut outcomes: Vec<CheckOutcome> = Vec::new();
    let mut report = |o: CheckOutcome| {
        println!("{}", o.line());
        outcomes.push(o);
    };

    report(checks::lightcone_facts(50, 1));
    report(checks::local_inversion_bound(20, 2));
    report(checks::existence_constructions());
    report(checks::fawzi_renner(200, 4));
    report(checks::sdp_correctness(6, 5, Some(&oracle)));
    report(checks::robustness(6, 2, 9));
    report(checks::end_to_end_exact(&[6, 8], Learner::Sdp));
    report(checks::end_to_end_shadows(&[6, 8], 20, Learner::Sdp));
    for n in [6usize, 8] {
        let budget = make_budget(0.1, n, 1, 1).unwrap();
        let w = n.min(8);
        let single = required_samples(n, w, budget.eps_lt, 0.05).unwrap() as f64;
        let wide = calibrated_samples(n, w, budget.eps_lt, 0.05).unwrap() as f64;
        println!("   info: n={n} w={w}: single-constant M = {single:.2e}, width-calibrated M = {wide:.2e}");
    }
    report(checks::one_way(Learner::Sdp));
    report(checks::classical_limit(20));
    match checks::homogeneous_chain_report(21) {
        Ok(line) => println!("   info: {line}"),
        Err(e) => println!("   info: homogeneous chain: {e}"),
    }
    report(checks::equivalence_constructions());

    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.line()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
