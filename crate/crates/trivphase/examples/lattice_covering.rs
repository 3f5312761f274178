//! Builds covering plans on a few lattices and prints their steps and the
//! validation of each structural condition.

use trivphase::covering::{build_covering, validate_covering};
use trivphase::lattice::{region, Boundary, Lattice};

fn fmt(r: &trivphase::lattice::Region) -> String {
    format!("{:?}", r.iter().collect::<Vec<_>>())
}

fn main() -> trivphase::Result<()> {
    let ring = Lattice::chain(8).with_boundary(Boundary::Periodic);
    let c = region([0, 1]);
    println!("ring of 8: dilate({}, 2) = {}", fmt(&c), fmt(&ring.dilate(&c, 2)));
    println!("ring of 8: distance(0, 7) = {}", ring.distance(0, 7));

    let sq = Lattice::square(3);
    println!("3x3 square: neighbors of the centre {:?}", sq.neighbors(sq.site(&[1, 1])));

    for (name, lat, s, patch) in [("chain 8", Lattice::chain(8), 1, 6), ("chain 12", Lattice::chain(12), 1, 6)] {
        let plan = build_covering(&lat, s, patch)?;
        println!("== {name}, s = {s}, patch {patch}: {} steps in layers {:?}", plan.steps.len(), plan.layers());
        for st in &plan.steps {
            let p = &st.parts;
            println!(
                "  step {} layer {} {:?}: B {} C {} D {} E {}",
                st.index,
                st.layer,
                st.kind,
                fmt(&p.b),
                fmt(&p.c),
                fmt(&p.d),
                fmt(&p.e)
            );
        }
        let report = validate_covering(&plan);
        for c in &report.conditions {
            println!("  condition {}: {} {}", c.condition, if c.pass { "ok" } else { "FAIL" }, c.detail);
        }
    }
    Ok(())
}
