//! Learns a generation circuit for a few factory targets from exact marginals
//! and checks the generated state against the true one.

use trivphase::covering::build_covering;
use trivphase::factory::{make_noisy_target, make_unitary_target};
use trivphase::lattice::Lattice;
use trivphase::pipeline::{learn, make_budget, report_render, verify, Learner};
use trivphase::shadows::MarginalSource;

fn main() -> trivphase::Result<()> {
    let eps = 0.1;
    for n in [6usize, 8] {
        let lat = Lattice::chain(n);
        let targets = [
            ("unitary d=1", make_unitary_target(7, &lat, 1, 2)?),
            ("noisy d=1 p=0.1", make_noisy_target(8, &lat, 1, 2, 0.1)?),
            ("unitary d=2", make_unitary_target(9, &lat, 2, 2)?),
        ];
        for (name, prep) in targets {
            let budget = make_budget(eps, n, 1, 1)?;
            let plan = build_covering(&lat, 1, 6)?;
            let source = MarginalSource::Exact(prep.rho.clone());
            let (w, mut report) = learn(&source, &lat, &budget, &plan, Learner::PetzBaseline)?;
            let v = verify(&w, &prep.rho, &budget)?;
            report.total_distance = Some(v.distance);
            let (text, _) = report_render(&report)?;
            println!("== n = {n} {name}: layers {} maps {} verify {:.3e} <= {:.3e}: {}", w.layers.len(), w.map_count(), v.distance, v.bound, v.pass);
            print!("{text}");
        }
    }
    Ok(())
}
