//! Target states with known preparation circuits and per-gate reversals,
//! numerical certification of local reversibility, local inversion, and the
//! reverse / compose constructions on preparations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{depolarizing, random_unitary_gate, ChannelGate};
use crate::circuit::{GateId, LayeredCircuit};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, Region};
use crate::linalg::{self, identity, psd_power, Mat};
use crate::state::{trace_distance, DensityMatrix, DEFAULT_QUBIT_CAP};

/// Regularization weight mixed into reference states before inversion.
pub const PETZ_REGULARIZATION: f64 = 1e-9;

/// Numerical slack allowed on top of the analytic bounds.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateError {
    pub layer: usize,
    pub position: usize,
    pub error: f64,
}

/// A preparation `ρ = E(σ)` with one reversal gate per gate of `E`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReversiblePreparation {
    pub lattice: Lattice,
    pub circuit: LayeredCircuit,
    /// Same labels and supports as `circuit`.
    pub reversals: LayeredCircuit,
    pub sigma: DensityMatrix,
    pub rho: DensityMatrix,
    pub certified_eps_lr: f64,
    pub profile: Vec<GateError>,
}

impl ReversiblePreparation {
    /// Checks the pairing of gates and reversals, simulates `ρ` and certifies.
    pub fn new(lattice: Lattice, circuit: LayeredCircuit, reversals: LayeredCircuit, sigma: DensityMatrix) -> Result<Self> {
        if lattice.n > DEFAULT_QUBIT_CAP {
            return Err(Error::SimulationCap { qubits: lattice.n, cap: DEFAULT_QUBIT_CAP });
        }
        if sigma.sites != (0..lattice.n).collect::<Vec<_>>() {
            return Err(Error::LabelMismatch("initial state must cover the whole lattice".into()));
        }
        if circuit.depth() != reversals.depth() {
            return Err(Error::InvalidArgument("reversal circuit depth differs".into()));
        }
        for (lg, lr) in circuit.layers.iter().zip(&reversals.layers) {
            if lg.len() != lr.len() {
                return Err(Error::InvalidArgument("reversal layer has a different gate count".into()));
            }
            for (g, r) in lg.iter().zip(lr) {
                if g.support != r.support || g.layer != r.layer || g.position != r.position {
                    return Err(Error::InvalidArgument(format!(
                        "reversal of gate ({}, {}) does not share its support",
                        g.layer, g.position
                    )));
                }
            }
        }
        let rho = circuit.apply(&sigma)?;
        let mut prep =
            Self { lattice, circuit, reversals, sigma, rho, certified_eps_lr: 0.0, profile: Vec::new() };
        certify_local_reversibility(&mut prep)?;
        Ok(prep)
    }

    pub fn n(&self) -> usize {
        self.lattice.n
    }

    pub fn depth(&self) -> usize {
        self.circuit.depth()
    }

    pub fn reversal(&self, id: GateId) -> &ChannelGate {
        self.reversals.layers[id.0 - 1].iter().find(|g| g.position == id.1).expect("reversal for every gate")
    }

    pub fn gate_error(&self, id: GateId) -> f64 {
        self.profile.iter().find(|e| (e.layer, e.position) == id).map(|e| e.error).unwrap_or(0.0)
    }

    /// Tight lightcone reach of the preparation circuit on its lattice.
    pub fn reach(&self) -> usize {
        self.circuit.reach(&self.lattice)
    }
}

/// Measures `||Ẽ ∘ E ∘ E_{<l-1}(σ) - E_{<l-1}(σ)||_1` for every gate, stores
/// the per-gate profile and returns the maximum.
pub fn certify_local_reversibility(prep: &mut ReversiblePreparation) -> Result<f64> {
    let mut profile = Vec::with_capacity(prep.circuit.gate_count());
    let mut state = prep.sigma.clone();
    for (layer, rev) in prep.circuit.layers.iter().zip(&prep.reversals.layers) {
        for (g, r) in layer.iter().zip(rev) {
            let back = r.apply(&g.apply(&state)?)?;
            profile.push(GateError { layer: g.layer, position: g.position, error: trace_distance(&back, &state)? });
        }
        for g in layer {
            state = g.apply(&state)?;
        }
    }
    prep.certified_eps_lr = profile.iter().map(|e| e.error).fold(0.0, f64::max);
    prep.profile = profile;
    Ok(prep.certified_eps_lr)
}

/// Per-gate error with an extra channel `extra` (disjoint from the gate)
/// inserted before the gate: `||Ẽ ∘ E ∘ C ∘ E_{<l-1}(σ) - C ∘ E_{<l-1}(σ)||_1`.
pub fn relaxed_gate_error(prep: &ReversiblePreparation, id: GateId, extra: &ChannelGate) -> Result<f64> {
    let gate = prep.circuit.layers[id.0 - 1].iter().find(|g| g.position == id.1).ok_or_else(|| {
        Error::InvalidArgument(format!("no gate ({}, {})", id.0, id.1))
    })?;
    if extra.support.iter().any(|s| gate.support.contains(s)) {
        return Err(Error::InvalidArgument("extra channel overlaps the gate".into()));
    }
    let before = extra.apply(&prep.circuit.apply_prefix(&prep.sigma, id.0 - 1)?)?;
    let back = prep.reversal(id).apply(&gate.apply(&before)?)?;
    trace_distance(&back, &before)
}

/// Gate supports of brickwork layer `layer` (1-based).
pub fn brickwork_layout(lattice: &Lattice, c: usize, layer: usize) -> Result<Vec<Vec<usize>>> {
    let l = lattice.l;
    let periodic = lattice.boundary == Boundary::Periodic;
    let mut out = Vec::new();
    match lattice.k {
        1 => {
            if c == 0 || c > l {
                return Err(Error::InvalidArgument(format!("gate size {c} does not fit a chain of {l}")));
            }
            let offset = if layer % 2 == 1 { 0 } else { c / 2 };
            let mut start = offset;
            while start < l {
                if start + c <= l {
                    out.push((start..start + c).collect());
                } else if periodic && l % c == 0 {
                    let mut g: Vec<usize> = (start..start + c).map(|x| x % l).collect();
                    g.sort_unstable();
                    out.push(g);
                }
                start += c;
            }
        }
        2 => {
            let site = |x: usize, y: usize| lattice.site(&[x % l, y % l]);
            let wraps = |x: usize| periodic && l % 2 == 0 && x + 1 == l;
            match c {
                2 => {
                    let phase = (layer - 1) % 4;
                    let vertical = phase % 2 == 1;
                    let offset = phase / 2;
                    for y in 0..l {
                        for x in (offset..l).step_by(2) {
                            if x + 1 < l || wraps(x) {
                                let (a, b) = if vertical { (site(y, x), site(y, x + 1)) } else { (site(x, y), site(x + 1, y)) };
                                let mut g = vec![a, b];
                                g.sort_unstable();
                                out.push(g);
                            }
                        }
                    }
                }
                4 => {
                    let offset = (layer - 1) % 2;
                    for y in (offset..l).step_by(2) {
                        for x in (offset..l).step_by(2) {
                            if (x + 1 < l || wraps(x)) && (y + 1 < l || wraps(y)) {
                                let mut g = vec![site(x, y), site(x + 1, y), site(x, y + 1), site(x + 1, y + 1)];
                                g.sort_unstable();
                                out.push(g);
                            }
                        }
                    }
                }
                _ => return Err(Error::InvalidArgument(format!("2D brickwork supports c = 2 or 4, got {c}"))),
            }
        }
        k => return Err(Error::InvalidArgument(format!("brickwork layouts exist for k = 1, 2 (got {k})"))),
    }
    Ok(out)
}

fn initial_state(lattice: &Lattice) -> Result<DensityMatrix> {
    if lattice.n > DEFAULT_QUBIT_CAP {
        return Err(Error::SimulationCap { qubits: lattice.n, cap: DEFAULT_QUBIT_CAP });
    }
    Ok(DensityMatrix::zero_state(&lattice.all()))
}

fn adjoint_gate(g: &ChannelGate) -> ChannelGate {
    ChannelGate { kraus: g.kraus.iter().map(|k| k.adjoint()).collect(), ..g.clone() }
}

/// Brickwork of Haar-random `c`-qubit unitaries; reversals are the adjoints.
pub fn make_unitary_target(seed: u64, lattice: &Lattice, depth: usize, c: usize) -> Result<ReversiblePreparation> {
    let sigma = initial_state(lattice)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(depth);
    for layer in 1..=depth {
        layers.push(
            brickwork_layout(lattice, c, layer)?.into_iter().map(|sup| random_unitary_gate(sup, &mut rng)).collect(),
        );
    }
    let circuit = LayeredCircuit::from_layers(layers)?;
    let reversals = LayeredCircuit::from_labelled(
        circuit.layers.iter().map(|l| l.iter().map(adjoint_gate).collect()).collect(),
    )?;
    ReversiblePreparation::new(lattice.clone(), circuit, reversals, sigma)
}

/// Petz reversal of `gate` with respect to the reference `tau` on its
/// support: Kraus operators `τ^{1/2} K^† N(τ)^{-1/2}` with `τ` regularized.
pub fn petz_reversal(gate: &ChannelGate, tau: &Mat) -> Result<ChannelGate> {
    let d = gate.dim();
    let tau = tau.scale(1.0 - PETZ_REGULARIZATION) + identity(d).scale(PETZ_REGULARIZATION / d as f64);
    let mut image = linalg::zeros(d, d);
    for k in &gate.kraus {
        image += k * &tau * k.adjoint();
    }
    let min = linalg::eigh(&image).min();
    if min < 1e-14 {
        return Err(Error::PetzSingular(min));
    }
    let inv_sqrt = psd_power(&image, -0.5, 0.0);
    let sqrt_tau = linalg::psd_sqrt(&tau);
    let kraus = gate.kraus.iter().map(|k| &sqrt_tau * k.adjoint() * &inv_sqrt).collect();
    Ok(ChannelGate { kraus, ..gate.clone() })
}

/// Unitary brickwork where each unitary layer is followed by a layer of
/// single-qubit depolarizing gates (strength `noise_p`) on every site; the
/// circuit therefore has `2 * depth` layers. Depolarizing gates are reversed
/// by their Petz maps with respect to the exact reduced state on their site.
pub fn make_noisy_target(
    seed: u64,
    lattice: &Lattice,
    depth: usize,
    c: usize,
    noise_p: f64,
) -> Result<ReversiblePreparation> {
    if !(0.0..1.0).contains(&noise_p) {
        return Err(Error::InvalidArgument(format!("noise strength {noise_p} outside [0, 1)")));
    }
    let sigma = initial_state(lattice)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gates = Vec::with_capacity(2 * depth);
    let mut revs = Vec::with_capacity(2 * depth);
    let mut state = sigma.clone();
    for layer in 1..=depth {
        let unitaries: Vec<ChannelGate> = brickwork_layout(lattice, c, layer)?
            .into_iter()
            .enumerate()
            .map(|(x, sup)| random_unitary_gate(sup, &mut rng).at(2 * layer - 1, x))
            .collect();
        for g in &unitaries {
            state = g.apply(&state)?;
        }
        let mut noise = Vec::with_capacity(lattice.n);
        let mut noise_rev = Vec::with_capacity(lattice.n);
        for site in 0..lattice.n {
            let g = depolarizing(site, noise_p).at(2 * layer, site);
            let tau = state.partial_trace(&Region::from([site]))?;
            noise_rev.push(petz_reversal(&g, &tau.mat)?);
            noise.push(g);
        }
        for g in &noise {
            state = g.apply(&state)?;
        }
        revs.push(unitaries.iter().map(adjoint_gate).collect());
        revs.push(noise_rev);
        gates.push(unitaries);
        gates.push(noise);
    }
    let circuit = LayeredCircuit::from_labelled(gates)?;
    let reversals = LayeredCircuit::from_labelled(revs)?;
    ReversiblePreparation::new(lattice.clone(), circuit, reversals, sigma)
}

/// The local inversion channel `P_S` and its measured error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalInversion {
    /// `Q = B_S \ B_{S̄}`.
    pub q: LayeredCircuit,
    /// Reversal gates in application order (descending layer).
    pub gates: Vec<ChannelGate>,
    /// `||P_S(ρ) - B_{S̄}(σ)||_1`.
    pub error: f64,
    /// Sum of the per-gate certified errors over `Q`.
    pub gate_sum_bound: f64,
    /// `|Q| · ε_LR`.
    pub bound: f64,
}

impl LocalInversion {
    pub fn apply(&self, state: &DensityMatrix) -> Result<DensityMatrix> {
        let mut cur = state.clone();
        for g in &self.gates {
            cur = g.apply(&cur)?;
        }
        Ok(cur)
    }

    pub fn support(&self) -> Region {
        self.q.support()
    }
}

/// Builds `P_S` from the reversals of `Q = B_S \ B_{S̄}` applied from the
/// top layer down, and checks `||P_S(ρ) - B_{S̄}(σ)||_1 ≤ |Q| ε_LR`.
pub fn local_inversion(prep: &ReversiblePreparation, s: &Region) -> Result<LocalInversion> {
    prep.lattice.check(s)?;
    let complement = prep.lattice.complement(s);
    let b_s = prep.circuit.backward_lightcone(s);
    let b_sbar = prep.circuit.backward_lightcone(&complement);
    let q = b_s.subtract(&b_sbar);
    let mut gates = Vec::with_capacity(q.gate_count());
    for layer in q.layers.iter().rev() {
        for g in layer {
            gates.push(prep.reversal((g.layer, g.position)).clone());
        }
    }
    let gate_sum_bound: f64 = q.gates().map(|g| prep.gate_error((g.layer, g.position))).sum();
    let bound = q.gate_count() as f64 * prep.certified_eps_lr;
    let mut inv = LocalInversion { q, gates, error: 0.0, gate_sum_bound, bound };
    let lhs = inv.apply(&prep.rho)?;
    let rhs = b_sbar.apply(&prep.sigma)?;
    inv.error = trace_distance(&lhs, &rhs)?;
    if inv.error > inv.bound + BOUND_SLACK {
        return Err(Error::BoundViolated(format!(
            "local inversion error {:e} exceeds |Q| ε_LR = {:e}",
            inv.error, inv.bound
        )));
    }
    Ok(inv)
}

/// A reversed preparation `σ ≈ S(ρ)` with the measured quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReversedPreparation {
    /// Preparation of `S(ρ)` from `ρ` with the original gates as reversals.
    pub prep: ReversiblePreparation,
    /// `||σ - S(ρ)||_1`.
    pub residual: f64,
    /// `n d ε_LR`.
    pub residual_bound: f64,
    /// `(2nd + 1) ε_LR`, the bound on the reversed preparation's own ε_LR.
    pub eps_lr_bound: f64,
}

/// Reverses a preparation: layer `l` of the new circuit holds the reversals
/// of layer `d - l + 1`, and the original gates serve as its reversals.
pub fn reverse_circuit(prep: &ReversiblePreparation) -> Result<ReversedPreparation> {
    let d = prep.depth();
    let mut gates = Vec::with_capacity(d);
    let mut revs = Vec::with_capacity(d);
    for l in 1..=d {
        let src = d - l + 1;
        gates.push(prep.reversals.layers[src - 1].iter().map(|g| g.clone().at(l, g.position)).collect());
        revs.push(prep.circuit.layers[src - 1].iter().map(|g| g.clone().at(l, g.position)).collect());
    }
    let circuit = LayeredCircuit::from_labelled(gates)?;
    let reversals = LayeredCircuit::from_labelled(revs)?;
    let new = ReversiblePreparation::new(prep.lattice.clone(), circuit, reversals, prep.rho.clone())?;
    let residual = trace_distance(&prep.sigma, &new.rho)?;
    let nd = (prep.n() * d) as f64;
    let out = ReversedPreparation {
        residual,
        residual_bound: nd * prep.certified_eps_lr,
        eps_lr_bound: (2.0 * nd + 1.0) * prep.certified_eps_lr,
        prep: new,
    };
    if out.residual > out.residual_bound + BOUND_SLACK {
        return Err(Error::BoundViolated(format!(
            "||σ - S(ρ)||_1 = {:e} exceeds n d ε_LR = {:e}",
            out.residual, out.residual_bound
        )));
    }
    if out.prep.certified_eps_lr > out.eps_lr_bound + BOUND_SLACK {
        return Err(Error::BoundViolated(format!(
            "reversed ε_LR {:e} exceeds (2nd + 1) ε_LR = {:e}",
            out.prep.certified_eps_lr, out.eps_lr_bound
        )));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComposedPreparation {
    pub prep: ReversiblePreparation,
    /// `||p1.ρ - p2.σ||_1`.
    pub eta: f64,
    /// `max(ε1, ε2 + 2η)`.
    pub bound: f64,
}

/// Concatenates `p1` then `p2` (with `p2.σ ≈ p1.ρ`), starting from `p1.σ`.
pub fn compose_preparations(p1: &ReversiblePreparation, p2: &ReversiblePreparation) -> Result<ComposedPreparation> {
    if p1.lattice != p2.lattice {
        return Err(Error::LatticeMismatch);
    }
    let eta = trace_distance(&p1.rho, &p2.sigma)?;
    let d1 = p1.depth();
    let shift = |c: &LayeredCircuit| -> Vec<Vec<ChannelGate>> {
        c.layers.iter().map(|l| l.iter().map(|g| g.clone().at(g.layer + d1, g.position)).collect()).collect()
    };
    let mut gates = p1.circuit.layers.clone();
    gates.extend(shift(&p2.circuit));
    let mut revs = p1.reversals.layers.clone();
    revs.extend(shift(&p2.reversals));
    let prep = ReversiblePreparation::new(
        p1.lattice.clone(),
        LayeredCircuit::from_labelled(gates)?,
        LayeredCircuit::from_labelled(revs)?,
        p1.sigma.clone(),
    )?;
    let bound = p1.certified_eps_lr.max(p2.certified_eps_lr + 2.0 * eta);
    if prep.certified_eps_lr > bound + BOUND_SLACK {
        return Err(Error::BoundViolated(format!(
            "composite ε_LR {:e} exceeds max(ε1, ε2 + 2η) = {bound:e}",
            prep.certified_eps_lr
        )));
    }
    Ok(ComposedPreparation { prep, eta, bound })
}

/// The empty preparation on `state`: no gates, `ρ = σ`.
pub fn trivial_preparation(lattice: &Lattice, state: DensityMatrix) -> Result<ReversiblePreparation> {
    ReversiblePreparation::new(lattice.clone(), LayeredCircuit::empty(0), LayeredCircuit::empty(0), state)
}

/// Named targets used by the property and acceptance suites.
pub fn factory_suite() -> Result<Vec<(String, ReversiblePreparation)>> {
    let mut out = Vec::new();
    for (n, d) in [(6, 1), (6, 2), (8, 1), (8, 2)] {
        out.push((format!("unitary n={n} d={d}"), make_unitary_target(100 + n as u64 + d as u64, &Lattice::chain(n), d, 2)?));
    }
    for (n, d, p) in [(6, 1, 0.05), (6, 2, 0.05), (8, 1, 0.1), (8, 1, 0.3)] {
        out.push((
            format!("noisy n={n} d={d} p={p}"),
            make_noisy_target(200 + n as u64 + d as u64, &Lattice::chain(n), d, 2, p)?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region;

    #[test]
    fn depth_zero_target_is_all_zero() {
        let p = make_unitary_target(1, &Lattice::chain(4), 0, 2).unwrap();
        assert_eq!(p.certified_eps_lr, 0.0);
        assert!(trace_distance(&p.rho, &p.sigma).unwrap() < 1e-15);
    }

    #[test]
    fn brickwork_offsets_alternate() {
        let lat = Lattice::chain(6);
        assert_eq!(brickwork_layout(&lat, 2, 1).unwrap(), vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(brickwork_layout(&lat, 2, 2).unwrap(), vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn noisy_target_is_certified() {
        let p = make_noisy_target(3, &Lattice::chain(4), 1, 2, 0.1).unwrap();
        assert_eq!(p.depth(), 2);
        assert!(p.certified_eps_lr > 0.0);
        let inv = local_inversion(&p, &region([1, 2])).unwrap();
        assert!(inv.error <= inv.gate_sum_bound + 1e-9);
    }
}
