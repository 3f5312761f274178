//! Local CPTP maps given by Kraus operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::linalg::{self, identity, unit, zeros, Mat, C64, ONE, ZERO};
use crate::state::DensityMatrix;

/// A channel gate `E_{l,x}`: Kraus operators on the qubits of `support`
/// (ascending; bit `j` of the operator index is `support[j]`).
/// Widest gate applied through its superoperator instead of register reordering.
const IN_PLACE_MAX_QUBITS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelGate {
    pub support: Vec<usize>,
    #[serde(with = "crate::io::mats_serde")]
    pub kraus: Vec<Mat>,
    pub layer: usize,
    pub position: usize,
}

impl ChannelGate {
    pub fn new(support: Vec<usize>, kraus: Vec<Mat>) -> Result<Self> {
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::LabelMismatch(format!("gate support {support:?} must be strictly ascending")));
        }
        let d = 1usize << support.len();
        if kraus.is_empty() {
            return Err(Error::InvalidArgument("gate needs at least one Kraus operator".into()));
        }
        for k in &kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: k.nrows() });
            }
        }
        Ok(Self { support, kraus, layer: 0, position: 0 })
    }

    pub fn at(mut self, layer: usize, position: usize) -> Self {
        self.layer = layer;
        self.position = position;
        self
    }

    pub fn support_region(&self) -> Region {
        self.support.iter().copied().collect()
    }

    pub fn dim(&self) -> usize {
        1 << self.support.len()
    }

    /// `max |sum K^dagger K - I|`.
    pub fn tp_residual(&self) -> f64 {
        tp_residual(&self.kraus, self.dim())
    }

    pub fn apply(&self, state: &DensityMatrix) -> Result<DensityMatrix> {
        if self.support.len() <= IN_PLACE_MAX_QUBITS && self.support.iter().all(|s| state.sites.contains(s)) {
            return state.apply_in_place(&self.support, &self.kraus);
        }
        state.apply_map(&self.support, &self.support, &self.kraus)
    }

    /// `other ∘ self` on a common support (the union of both).
    pub fn then(&self, other: &ChannelGate) -> Result<ChannelGate> {
        let support: Vec<usize> = self.support_region().union(&other.support_region()).copied().collect();
        let a = self.lift(&support);
        let b = other.lift(&support);
        let mut kraus = Vec::with_capacity(a.len() * b.len());
        for kb in &b {
            for ka in &a {
                kraus.push(kb * ka);
            }
        }
        Ok(ChannelGate { support, kraus: compress_kraus(&kraus), layer: self.layer, position: self.position })
    }

    /// Kraus operators embedded on a larger ascending support.
    pub fn lift(&self, support: &[usize]) -> Vec<Mat> {
        self.kraus.iter().map(|k| embed_operator(k, &self.support, support)).collect()
    }
}

/// `max |sum K^dagger K - I|` for operators on a `d`-dimensional input.
pub fn tp_residual(kraus: &[Mat], d: usize) -> f64 {
    let mut acc = zeros(d, d);
    for k in kraus {
        acc += k.adjoint() * k;
    }
    linalg::max_abs(&(acc - identity(d)))
}

/// Embeds `op` acting on `inner` (ascending) into the ascending `outer` support.
pub fn embed_operator(op: &Mat, inner: &[usize], outer: &[usize]) -> Mat {
    if inner == outer {
        return op.clone();
    }
    let rest: Vec<usize> = outer.iter().copied().filter(|s| !inner.contains(s)).collect();
    let big = linalg::kron(&identity(1 << rest.len()), op);
    let order: Vec<usize> = inner.iter().chain(&rest).copied().collect();
    let perm: Vec<usize> = outer.iter().map(|s| order.iter().position(|o| o == s).unwrap()).collect();
    linalg::permute_qubits(&big, &perm)
}

/// Reduces a Kraus list to the minimal number of operators through its Choi matrix.
pub fn compress_kraus(kraus: &[Mat]) -> Vec<Mat> {
    let din = kraus[0].ncols();
    let dout = kraus[0].nrows();
    if kraus.len() <= 1 {
        return kraus.to_vec();
    }
    let j = crate::choi::kraus_to_choi_mat(kraus);
    let out = crate::choi::choi_mat_to_kraus(&j, din, dout, 1e-13);
    if out.is_empty() {
        kraus.to_vec()
    } else {
        out
    }
}

/// Single-qubit Pauli matrices `I, X, Y, Z`.
pub fn pauli(i: usize) -> Mat {
    let m = match i {
        0 => [ONE, ZERO, ZERO, ONE],
        1 => [ZERO, ONE, ONE, ZERO],
        2 => [ZERO, -linalg::I, linalg::I, ZERO],
        3 => [ONE, ZERO, ZERO, -ONE],
        _ => panic!("Pauli index {i} out of range"),
    };
    Mat::from_row_slice(2, 2, &m)
}

pub fn hadamard() -> Mat {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Mat::from_row_slice(2, 2, &[h, h, h, -h])
}

/// Two-qubit CNOT with control on the low qubit (first support site).
pub fn cnot() -> Mat {
    let mut m = zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(3, 1)] = ONE;
    m[(2, 2)] = ONE;
    m[(1, 3)] = ONE;
    m
}

pub fn unitary_gate(support: Vec<usize>, u: Mat) -> Result<ChannelGate> {
    ChannelGate::new(support, vec![u])
}

pub fn identity_gate(support: Vec<usize>) -> ChannelGate {
    let d = 1 << support.len();
    ChannelGate::new(support, vec![identity(d)]).expect("valid identity")
}

/// Depolarizing channel `(1-p) X + p Tr(X) I/2` on one qubit.
pub fn depolarizing(site: usize, p: f64) -> ChannelGate {
    let p = p.clamp(0.0, 1.0);
    let mut kraus = vec![identity(2).scale((1.0 - 0.75 * p).sqrt())];
    for i in 1..4 {
        kraus.push(pauli(i).scale((p / 4.0).sqrt()));
    }
    ChannelGate::new(vec![site], kraus).expect("valid depolarizing")
}

/// Bit-flip channel `(1-p) X + p σx X σx`.
pub fn bit_flip(site: usize, p: f64) -> ChannelGate {
    let p = p.clamp(0.0, 1.0);
    ChannelGate::new(vec![site], vec![identity(2).scale((1.0 - p).sqrt()), pauli(1).scale(p.sqrt())])
        .expect("valid bit flip")
}

pub fn amplitude_damping(site: usize, gamma: f64) -> ChannelGate {
    let g = gamma.clamp(0.0, 1.0);
    let mut k0 = zeros(2, 2);
    k0[(0, 0)] = ONE;
    k0[(1, 1)] = C64::new((1.0 - g).sqrt(), 0.0);
    let mut k1 = zeros(2, 2);
    k1[(0, 1)] = C64::new(g.sqrt(), 0.0);
    ChannelGate::new(vec![site], vec![k0, k1]).expect("valid amplitude damping")
}

/// Reset channel `R_S(X) = Tr_S(X) ⊗ |0><0|_S` with Kraus operators `|0><b|`.
pub fn reset_channel(region: &Region) -> ChannelGate {
    let support: Vec<usize> = region.iter().copied().collect();
    let d = 1 << support.len();
    let kraus = (0..d).map(|b| unit(d, 0, b)).collect();
    ChannelGate::new(support, kraus).expect("valid reset")
}

/// Haar-random unitary gate on `support`.
pub fn random_unitary_gate<R: rand::Rng + ?Sized>(support: Vec<usize>, rng: &mut R) -> ChannelGate {
    let d = 1 << support.len();
    ChannelGate::new(support, vec![linalg::haar_unitary(d, rng)]).expect("valid unitary")
}

/// Random channel from a Haar isometry `V: d -> d * r`, split into `r` Kraus operators.
pub fn random_channel_gate<R: rand::Rng + ?Sized>(support: Vec<usize>, rank: usize, rng: &mut R) -> ChannelGate {
    let d = 1 << support.len();
    let g = linalg::gaussian_matrix(d * rank, d, rng);
    let v = linalg::isometry_from(&g);
    let kraus = (0..rank).map(|r| v.rows(r * d, d).into_owned()).collect();
    ChannelGate::new(support, kraus).expect("valid random channel")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region;
    use crate::state::trace_distance;

    #[test]
    fn reset_takes_one_to_zero() {
        let one = DensityMatrix::raw(vec![0], unit(2, 1, 1)).unwrap();
        let out = reset_channel(&region([0])).apply(&one).unwrap();
        assert!(trace_distance(&out, &DensityMatrix::zero_state(&region([0]))).unwrap() < 1e-14);
    }

    #[test]
    fn full_depolarization_gives_maximally_mixed() {
        let z = DensityMatrix::zero_state(&region([0]));
        let out = depolarizing(0, 1.0).apply(&z).unwrap();
        assert!(linalg::max_abs(&(out.mat - identity(2).scale(0.5))) < 1e-14);
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        // control on site 0 (low bit): |01> in (site1, site0) = index 1 -> index 3
        let g = unitary_gate(vec![0, 1], cnot()).unwrap();
        let s = DensityMatrix::raw(vec![0, 1], unit(4, 1, 1)).unwrap();
        let out = g.apply(&s).unwrap();
        assert!((out.mat[(3, 3)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_channels_are_trace_preserving() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g = random_channel_gate(vec![2, 5], 3, &mut rng);
        assert!(g.tp_residual() < 1e-12);
        assert!(depolarizing(0, 0.3).tp_residual() < 1e-14);
        assert!(amplitude_damping(0, 0.3).tp_residual() < 1e-14);
    }
}
