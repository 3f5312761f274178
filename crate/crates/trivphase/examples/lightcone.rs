//! Checks the backward lightcone decomposition on random brickwork circuits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trivphase::circuit::{verify_lightcone_decomposition, LayeredCircuit};
use trivphase::channel::random_channel_gate;
use trivphase::factory::brickwork_layout;
use trivphase::lattice::{region, Lattice};

fn main() -> trivphase::Result<()> {
    let lat = Lattice::chain(6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut layers = Vec::new();
    for layer in 1..=3 {
        let gates = brickwork_layout(&lat, 2, layer)?
            .into_iter()
            .map(|support| random_channel_gate(support, 2, &mut rng))
            .collect();
        layers.push(gates);
    }
    let circuit = LayeredCircuit::from_layers(layers)?;
    println!("depth {} with {} gates, lightcone width {}", circuit.depth(), circuit.gate_count(), circuit.lightcone_width());

    for (s1, s2) in [(region([0]), region([1])), (region([0, 1]), region([3])), (region([2]), region([4, 5]))] {
        let b1 = circuit.backward_lightcone(&s1);
        let rep = verify_lightcone_decomposition(&circuit, &lat, &s1, &s2)?;
        println!(
            "S1 {:?} S2 {:?}: |B_S1| = {}, |Q| = {}, Q support {:?} (local: {}), residual {:.2e}",
            s1,
            s2,
            b1.gate_count(),
            rep.q_gates,
            rep.q_support,
            rep.support_ok,
            rep.residual
        );
    }
    Ok(())
}
