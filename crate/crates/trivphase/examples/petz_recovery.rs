//! Recovers a site from its neighbour with the plain and twirled Petz maps
//! and compares the error against the conditional mutual information.

use trivphase::factory::make_noisy_target;
use trivphase::lattice::{region, Lattice};
use trivphase::recovery::{cmi, fawzi_renner_check, petz_map, PetzKind};

fn main() -> trivphase::Result<()> {
    let lat = Lattice::chain(6);
    for p in [0.05, 0.3] {
        let prep = make_noisy_target(11, &lat, 2, 2, p)?;
        let (a, b, c) = (region([0, 1]), region([2, 3]), region([4]));
        let bc = prep.rho.partial_trace(&b.union(&c).copied().collect())?;
        println!("== noise {p}: I(A:C|B) = {:.4e} bits", cmi(&prep.rho, &a, &b, &c)?);
        for kind in [PetzKind::Plain, PetzKind::Twirled(48)] {
            let map = petz_map(&bc, &b, &c, kind)?;
            let fr = fawzi_renner_check(&prep.rho, &a, &b, &c, &map)?;
            println!(
                "  {kind:?}: distance {:.4e}, d²/(2 ln 2) = {:.4e} vs CMI {:.4e}: {}",
                fr.distance,
                fr.lhs,
                fr.rhs,
                if fr.pass { "holds" } else { "violated" }
            );
        }
    }
    Ok(())
}
