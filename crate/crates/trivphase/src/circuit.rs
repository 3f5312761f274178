//! Layered channel circuits, backward lightcones and lightcone decompositions.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelGate;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg::{self, unit, Mat};
use crate::state::DensityMatrix;

/// Gate identity within a parent circuit: `(layer, position)`, layer 1-based.
pub type GateId = (usize, usize);

/// Circuit of `depth` layers of non-overlapping gates, applied layer 1 first.
/// Sub-circuits keep the parent's depth, with possibly empty layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredCircuit {
    pub layers: Vec<Vec<ChannelGate>>,
}

impl LayeredCircuit {
    /// Builds a circuit, labelling gates `(layer, position)` by their place.
    pub fn from_layers(layers: Vec<Vec<ChannelGate>>) -> Result<Self> {
        let layers: Vec<Vec<ChannelGate>> = layers
            .into_iter()
            .enumerate()
            .map(|(l, gates)| gates.into_iter().enumerate().map(|(x, g)| g.at(l + 1, x)).collect())
            .collect();
        let c = Self { layers };
        c.check_layers()?;
        Ok(c)
    }

    /// Builds a circuit keeping the gates' existing labels.
    pub fn from_labelled(layers: Vec<Vec<ChannelGate>>) -> Result<Self> {
        let c = Self { layers };
        c.check_layers()?;
        Ok(c)
    }

    pub fn empty(depth: usize) -> Self {
        Self { layers: vec![Vec::new(); depth] }
    }

    fn check_layers(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            let mut used = BTreeSet::new();
            for g in layer {
                for &s in &g.support {
                    if !used.insert(s) {
                        return Err(Error::InvalidArgument(format!("layer {} has overlapping gates on site {s}", l + 1)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Largest gate support size `c`.
    pub fn gate_size(&self) -> usize {
        self.gates().map(|g| g.support.len()).max().unwrap_or(0)
    }

    /// Lightcone extension width `s = c * d`.
    pub fn lightcone_width(&self) -> usize {
        self.gate_size() * self.depth()
    }

    /// Largest distance a backward lightcone can reach beyond its seed: the
    /// sum over layers of the largest gate diameter.
    pub fn reach(&self, lattice: &Lattice) -> usize {
        self.layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|g| {
                        let mut m = 0;
                        for &a in &g.support {
                            for &b in &g.support {
                                m = m.max(lattice.distance(a, b));
                            }
                        }
                        m
                    })
                    .max()
                    .unwrap_or(0)
            })
            .sum()
    }

    pub fn gates(&self) -> impl Iterator<Item = &ChannelGate> {
        self.layers.iter().flatten()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.gate_count() == 0
    }

    pub fn ids(&self) -> BTreeSet<GateId> {
        self.gates().map(|g| (g.layer, g.position)).collect()
    }

    pub fn support(&self) -> Region {
        self.gates().flat_map(|g| g.support.iter().copied()).collect()
    }

    /// Checks trace preservation of every gate and the gate-size cap.
    pub fn validate(&self, cap: usize, tol: f64) -> Result<()> {
        for g in self.gates() {
            if g.support.len() > cap {
                return Err(Error::InvalidArgument(format!(
                    "gate ({}, {}) has {} sites, above the cap {cap}",
                    g.layer,
                    g.position,
                    g.support.len()
                )));
            }
            let r = g.tp_residual();
            if r > tol {
                return Err(Error::InvalidArgument(format!("gate ({}, {}) is not trace preserving ({r:e})", g.layer, g.position)));
            }
        }
        Ok(())
    }

    pub fn apply(&self, state: &DensityMatrix) -> Result<DensityMatrix> {
        self.apply_prefix(state, self.depth())
    }

    /// `E_{<= l}(state)`: the first `l` layers.
    pub fn apply_prefix(&self, state: &DensityMatrix, l: usize) -> Result<DensityMatrix> {
        let mut cur = state.clone();
        for layer in &self.layers[..l.min(self.depth())] {
            for g in layer {
                cur = g.apply(&cur)?;
            }
        }
        Ok(cur)
    }

    /// Gates kept by `keep`, preserving depth and labels.
    pub fn filter(&self, keep: impl Fn(&ChannelGate) -> bool) -> Self {
        Self { layers: self.layers.iter().map(|l| l.iter().filter(|g| keep(g)).cloned().collect()).collect() }
    }

    /// Backward lightcone `B_S`: sweep from the top layer down, keeping
    /// gates that touch the frontier and growing it by their supports.
    pub fn backward_lightcone(&self, s: &Region) -> Self {
        let mut frontier = s.clone();
        let mut layers = vec![Vec::new(); self.depth()];
        for l in (0..self.depth()).rev() {
            let hit: Vec<ChannelGate> =
                self.layers[l].iter().filter(|g| g.support.iter().any(|x| frontier.contains(x))).cloned().collect();
            for g in &hit {
                frontier.extend(g.support.iter().copied());
            }
            layers[l] = hit;
        }
        Self { layers }
    }

    /// Per-layer set difference `self \ other`, gates matched by `(layer, position)`.
    pub fn subtract(&self, other: &Self) -> Self {
        let drop = other.ids();
        self.filter(|g| !drop.contains(&(g.layer, g.position)))
    }

    pub fn is_subcircuit_of(&self, other: &Self) -> bool {
        self.ids().is_subset(&other.ids())
    }

    /// The circuit `other ∘ self` (layers of `self` first).
    pub fn then(&self, other: &Self) -> Self {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        Self { layers }
    }
}

/// Distance between two channels given as circuits, compared on the union
/// of their supports: the Frobenius norm of the Choi difference when the
/// union has at most `choi_qubits` qubits, else the largest output
/// difference over `probes` random unit-Frobenius operators.
pub fn channel_residual(a: &LayeredCircuit, b: &LayeredCircuit, choi_qubits: usize, probes: usize) -> Result<f64> {
    let union: Region = a.support().union(&b.support()).copied().collect();
    let sites: Vec<usize> = union.iter().copied().collect();
    let d = 1usize << sites.len();
    let eval = |x: Mat| -> Result<f64> {
        let op = DensityMatrix::raw(sites.clone(), x)?;
        Ok(linalg::frobenius(&(a.apply(&op)?.mat - b.apply(&op)?.mat)))
    };
    if sites.len() <= choi_qubits {
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let r = eval(unit(d, i, j))?;
                acc += r * r;
            }
        }
        Ok(acc.sqrt())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ (d as u64));
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let g = linalg::gaussian_matrix(d, d, &mut rng);
            let n = linalg::frobenius(&g);
            worst = worst.max(eval(g.unscale(n))?);
        }
        Ok(worst)
    }
}

/// Default comparison: Choi matrices up to 4 qubits, 16 probes beyond.
pub fn channels_residual(a: &LayeredCircuit, b: &LayeredCircuit) -> Result<f64> {
    channel_residual(a, b, 4, 16)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LightconeReport {
    /// Distance between `B_{S1 ∪ S2}` and `Q ∘ B_{S1}`.
    pub residual: f64,
    pub q_gates: usize,
    pub q_support: Region,
    /// Whether `Supp(Q) ⊆ dilate(S2, s) \ S1`.
    pub support_ok: bool,
}

/// Checks `B_{S1 ∪ S2} = Q ∘ B_{S1}` with `Q = B_{S2} \ B_{S1}`.
pub fn verify_lightcone_decomposition(
    circuit: &LayeredCircuit,
    lattice: &Lattice,
    s1: &Region,
    s2: &Region,
) -> Result<LightconeReport> {
    lattice.check(s1)?;
    lattice.check(s2)?;
    let b1 = circuit.backward_lightcone(s1);
    let b2 = circuit.backward_lightcone(s2);
    let b12 = circuit.backward_lightcone(&s1.union(s2).copied().collect());
    let q = b2.subtract(&b1);
    // gates of Q never precede a gate of B_{S1} on a shared site, so Q runs last
    let composed = b1.then(&q);
    let residual = channels_residual(&b12, &composed)?;
    let q_support = q.support();
    let allowed: Region = lattice.dilate(s2, circuit.lightcone_width()).difference(s1).copied().collect();
    Ok(LightconeReport { residual, q_gates: q.gate_count(), support_ok: q_support.is_subset(&allowed), q_support })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{identity_gate, pauli, unitary_gate};
    use crate::lattice::region;

    fn bricks() -> LayeredCircuit {
        LayeredCircuit::from_layers(vec![vec![identity_gate(vec![0, 1]), identity_gate(vec![2, 3]), identity_gate(vec![4, 5])]])
            .unwrap()
    }

    #[test]
    fn lightcone_of_single_site_picks_its_gate() {
        let c = bricks();
        let b = c.backward_lightcone(&region([2]));
        assert_eq!(b.ids(), BTreeSet::from([(1, 1)]));
        assert!(c.backward_lightcone(&Region::new()).is_empty());
        assert_eq!(c.backward_lightcone(&Lattice::chain(6).all()).ids(), c.ids());
    }

    #[test]
    fn subtract_is_setwise() {
        let c = bricks();
        assert!(c.subtract(&c).is_empty());
        assert_eq!(c.subtract(&LayeredCircuit::empty(1)).ids(), c.ids());
    }

    #[test]
    fn x_layer_flips_all_qubits() {
        let gates = (0..3).map(|i| unitary_gate(vec![i], pauli(1)).unwrap()).collect();
        let c = LayeredCircuit::from_layers(vec![gates]).unwrap();
        let out = c.apply(&DensityMatrix::zero_state(&region([0, 1, 2]))).unwrap();
        assert!((out.mat[(7, 7)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn overlapping_layer_is_rejected() {
        let r = LayeredCircuit::from_layers(vec![vec![identity_gate(vec![0, 1]), identity_gate(vec![1, 2])]]);
        assert!(r.is_err());
    }
}
