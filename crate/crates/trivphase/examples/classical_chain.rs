//! Learns a classical Markov chain from exact marginals and from samples.

use trivphase::classical::{learn_classical, random_markov_chain, verify_classical, ClassicalSource};
use trivphase::covering::build_covering;
use trivphase::lattice::Lattice;
use trivphase::pipeline::make_budget;

fn main() -> trivphase::Result<()> {
    let n = 12;
    let lat = Lattice::chain(n);
    let plan = build_covering(&lat, 1, 6)?;
    let budget = make_budget(0.1, n, 1, 1)?;
    let p = random_markov_chain(n, 2, 3, 8)?;

    let (w, report) = learn_classical(&ClassicalSource::Exact(p.clone()), &lat, &budget, &plan)?;
    let v = verify_classical(&w, &p, &budget)?;
    println!("exact: {:?}, {} maps, TV {:.2e} <= {:.2e}", report.flag, w.map_count(), v.tv, v.bound);

    let counts = p.sample_counts(2_000_000, 9)?;
    let (w, report) = learn_classical(&ClassicalSource::Counts(counts), &lat, &budget, &plan)?;
    let v = verify_classical(&w, &p, &budget)?;
    println!("2e6 samples: {:?}, TV {:.2e} <= {:.2e}", report.flag, v.tv, v.bound);
    for st in report.steps.iter().take(4) {
        println!("  step {} {:?}: L1 {:.3e} vs {:.3e}", st.step, st.kind, st.achieved.unwrap_or(f64::NAN), st.threshold);
    }
    Ok(())
}
