//! Solves the fidelity SDP for a small extension problem and compares it
//! with the Petz baseline.

use trivphase::factory::make_noisy_target;
use trivphase::lattice::{region, Lattice};
use trivphase::learner::{petz_baseline_extension, solve_fidelity_sdp, RecoveryProblem};
use trivphase::recovery::PetzKind;

fn main() -> trivphase::Result<()> {
    let lat = Lattice::chain(6);
    let prep = make_noisy_target(5, &lat, 1, 2, 0.1)?;
    let (a_in, b, c, e) = (region([1]), region([2]), region([3]), region([]));
    let patch = region([1, 2, 3]);
    let problem = RecoveryProblem::from_state(&prep.rho.partial_trace(&patch)?, &a_in, &b, &c, &e, 1e-6)?;

    let sdp = solve_fidelity_sdp(&problem)?;
    println!(
        "SDP: fidelity {:.8}, upper bound {:.8}, distance {:.3e}, {:?} after {} iterations",
        sdp.fidelity, sdp.upper_bound, sdp.distance, sdp.certificate, sdp.iterations
    );
    println!("  CPTP residuals: {:?}", sdp.residuals);
    for row in sdp.log.iter().step_by(5) {
        println!("  {row:?}");
    }
    let petz = petz_baseline_extension(&problem, PetzKind::Plain)?;
    println!("Petz: fidelity {:.8}, distance {:.3e}", petz.fidelity, petz.distance);
    Ok(())
}
