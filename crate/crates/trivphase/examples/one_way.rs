//! Runs the one-way test on a trivial-phase target and on a state with a
//! Bell pair planted across two first-layer blocks.

use trivphase::covering::build_covering;
use trivphase::factory::make_noisy_target;
use trivphase::lattice::Lattice;
use trivphase::pipeline::{bell_obstruction_state, bridging_pair, make_budget, one_way_test, Learner};
use trivphase::shadows::MarginalSource;

fn main() -> trivphase::Result<()> {
    let n = 8;
    let lat = Lattice::chain(n);
    let plan = build_covering(&lat, 1, 6)?;
    let budget = make_budget(0.1, n, 1, 1)?;
    let pair = bridging_pair(&plan).expect("plan has two first-layer blocks");

    let trivial = make_noisy_target(4, &lat, 1, 2, 0.1)?.rho;
    let bell = bell_obstruction_state(&lat, pair, 4)?;
    for (name, rho) in [("noisy brickwork", trivial), ("Bell pair across blocks", bell)] {
        let out = one_way_test(&MarginalSource::Exact(rho), &lat, &budget, &plan, Learner::PetzBaseline)?;
        println!("== {name}: {:?}", out.flag);
        if let Some(w) = out.witness {
            println!("  witness: step {} ({:?}) achieved {:.3e} > {:.3e}", w.step, w.kind, w.achieved.unwrap_or(f64::NAN), w.threshold);
        }
    }
    Ok(())
}
