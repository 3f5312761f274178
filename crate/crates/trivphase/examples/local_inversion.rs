//! Builds noisy targets, certifies their local reversibility and runs the
//! local inversion and circuit reversal on them.

use trivphase::factory::{local_inversion, make_noisy_target, make_unitary_target, reverse_circuit};
use trivphase::lattice::{region, Lattice};

fn main() -> trivphase::Result<()> {
    let lat = Lattice::chain(6);
    let targets = [
        ("unitary d=2", make_unitary_target(1, &lat, 2, 2)?),
        ("noisy d=1 p=0.05", make_noisy_target(2, &lat, 1, 2, 0.05)?),
        ("noisy d=1 p=0.3", make_noisy_target(3, &lat, 1, 2, 0.3)?),
    ];
    for (name, prep) in targets {
        println!("== {name}: depth {}, certified ε_LR {:.3e}", prep.depth(), prep.certified_eps_lr);
        for s in [region([0]), region([2, 3]), region([5])] {
            let inv = local_inversion(&prep, &s)?;
            println!(
                "  S = {:?}: |Q| = {}, error {:.3e}, per-gate sum {:.3e}, bound {:.3e}",
                s,
                inv.q.gate_count(),
                inv.error,
                inv.gate_sum_bound,
                inv.bound
            );
        }
        let rev = reverse_circuit(&prep)?;
        println!("  reversal residual {:.3e} <= {:.3e}", rev.residual, rev.residual_bound);
    }
    Ok(())
}
