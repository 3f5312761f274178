//! Choi matrices `J = sum_ij |i><j| ⊗ Φ(|i><j|)`.
//!
//! Row index of `J` is `i * d_out + a` (input index major).

use serde::{Deserialize, Serialize};

use crate::channel::ChannelGate;
use crate::error::{Error, Result};
use crate::linalg::{self, eigh, identity, kron, psd_power, zeros, Mat, C64, ZERO};
use crate::state::DensityMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiMatrix {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    #[serde(with = "crate::io::mat_serde")]
    pub mat: Mat,
}

/// Choi matrix of a Kraus list (`d_out x d_in` operators).
pub fn kraus_to_choi_mat(kraus: &[Mat]) -> Mat {
    let din = kraus[0].ncols();
    let dout = kraus[0].nrows();
    let mut j = zeros(din * dout, din * dout);
    for k in kraus {
        let v = Mat::from_fn(din * dout, 1, |r, _| k[(r % dout, r / dout)]);
        j += &v * v.adjoint();
    }
    j
}

/// Kraus operators `K[a, i] = sqrt(λ) v[i * d_out + a]` from the eigenvectors
/// of `J`, dropping eigenvalues at or below `cutoff`.
pub fn choi_mat_to_kraus(j: &Mat, din: usize, dout: usize, cutoff: f64) -> Vec<Mat> {
    let e = eigh(j);
    let mut out = Vec::new();
    for (idx, &lam) in e.values.iter().enumerate().rev() {
        if lam <= cutoff {
            continue;
        }
        let r = lam.sqrt();
        out.push(Mat::from_fn(dout, din, |a, i| e.vectors[(i * dout + a, idx)] * r));
    }
    out
}

impl ChoiMatrix {
    pub fn new(input: Vec<usize>, output: Vec<usize>, mat: Mat) -> Result<Self> {
        let d = (1usize << input.len()) * (1usize << output.len());
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: mat.nrows() });
        }
        Ok(Self { input, output, mat })
    }

    pub fn from_kraus(input: Vec<usize>, output: Vec<usize>, kraus: &[Mat]) -> Result<Self> {
        Self::new(input, output, kraus_to_choi_mat(kraus))
    }

    pub fn din(&self) -> usize {
        1 << self.input.len()
    }

    pub fn dout(&self) -> usize {
        1 << self.output.len()
    }

    /// `Tr_out J`, equal to the identity for trace-preserving maps.
    pub fn output_trace(&self) -> Mat {
        let (din, dout) = (self.din(), self.dout());
        Mat::from_fn(din, din, |i, j| (0..dout).map(|a| self.mat[(i * dout + a, j * dout + a)]).sum())
    }

    /// `(smallest eigenvalue of J, max |Tr_out J - I|)`.
    pub fn cptp_residuals(&self) -> (f64, f64) {
        let min = eigh(&self.mat).min();
        let tp = linalg::max_abs(&(self.output_trace() - identity(self.din())));
        (min, tp)
    }

    pub fn is_cptp(&self, tol: f64) -> bool {
        let (min, tp) = self.cptp_residuals();
        min >= -tol && tp <= tol
    }

    pub fn to_kraus(&self) -> Vec<Mat> {
        let mut k = choi_mat_to_kraus(&self.mat, self.din(), self.dout(), 1e-14);
        if k.is_empty() {
            k.push(zeros(self.dout(), self.din()));
        }
        k
    }

    /// Forces exact trace preservation: `(T^{-1/2} ⊗ I) J (T^{-1/2} ⊗ I)` with `T = Tr_out J`.
    pub fn tp_projected(&self) -> Self {
        let t = self.output_trace();
        let inv = psd_power(&linalg::hermitian_part(&t), -0.5, 1e-14);
        let m = kron(&inv, &identity(self.dout()));
        Self { input: self.input.clone(), output: self.output.clone(), mat: &m * &self.mat * &m }
    }

    /// `Φ(X)_{ab} = sum_ij X_ij J[(i,a), (j,b)]`, i.e. `Tr_in[(X^T ⊗ I) J]`.
    /// `x` must live exactly on the input sites.
    pub fn apply_local(&self, x: &Mat) -> Result<Mat> {
        let (din, dout) = (self.din(), self.dout());
        if x.nrows() != din {
            return Err(Error::DimensionMismatch { expected: din, actual: x.nrows() });
        }
        let mut out = zeros(dout, dout);
        for i in 0..din {
            for j in 0..din {
                let xij = x[(i, j)];
                if xij == ZERO {
                    continue;
                }
                for b in 0..dout {
                    for a in 0..dout {
                        out[(a, b)] += xij * self.mat[(i * dout + a, j * dout + b)];
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn gate_to_choi(gate: &ChannelGate) -> ChoiMatrix {
    ChoiMatrix::from_kraus(gate.support.clone(), gate.support.clone(), &gate.kraus).expect("gate dimensions")
}

/// Applies the map to a state holding at least the input sites; the result
/// lives on `(sites \ input) ∪ output`.
pub fn choi_apply(choi: &ChoiMatrix, state: &DensityMatrix) -> Result<DensityMatrix> {
    if state.sites == choi.input && choi.input == choi.output {
        return DensityMatrix::raw(state.sites.clone(), choi.apply_local(&state.mat)?);
    }
    if state.sites == choi.input && choi.input.iter().all(|s| !choi.output.contains(s)) {
        let out = choi.apply_local(&state.mat)?;
        return Ok(DensityMatrix::reorder_sorted(choi.output.clone(), out));
    }
    let fresh: crate::lattice::Region = choi.output.iter().copied().filter(|s| !choi.input.contains(s)).collect();
    let base = state.trace_out(&fresh);
    let mut perm = base.positions(&choi.input)?;
    let rest: Vec<usize> = base.sites.iter().copied().filter(|s| !choi.input.contains(s)).collect();
    perm.extend(base.positions(&rest)?);
    let x = linalg::permute_qubits(&base.mat, &perm);
    let (din, dout, dr) = (choi.din(), choi.dout(), 1usize << rest.len());
    let mut out = zeros(dout * dr, dout * dr);
    for r2 in 0..dr {
        for j in 0..din {
            for r1 in 0..dr {
                for i in 0..din {
                    let xij = x[(i + din * r1, j + din * r2)];
                    if xij == ZERO {
                        continue;
                    }
                    for b in 0..dout {
                        for a in 0..dout {
                            out[(a + dout * r1, b + dout * r2)] += xij * choi.mat[(i * dout + a, j * dout + b)];
                        }
                    }
                }
            }
        }
    }
    let order: Vec<usize> = choi.output.iter().chain(&rest).copied().collect();
    Ok(DensityMatrix::reorder_sorted(order, out))
}

/// Unnormalized maximally entangled projector `sum_ij |ii><jj|`, the Choi
/// matrix of the identity channel on `d` levels.
pub fn identity_choi_mat(d: usize) -> Mat {
    let mut m = zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = C64::new(1.0, 0.0);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{random_channel_gate, reset_channel};
    use crate::lattice::region;
    use rand::SeedableRng;

    #[test]
    fn choi_contraction_matches_kraus_application() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g = random_channel_gate(vec![1, 3], 3, &mut rng);
        let sites = vec![0, 1, 2, 3];
        let rho = DensityMatrix::new(sites, linalg::random_density(16, 3, &mut rng)).unwrap();
        // B = {3, 1} -> BC = {1, 4}: exercises reordering, a fresh site and a dropped one
        let j = ChoiMatrix::from_kraus(vec![3, 1], vec![1, 4], &g.kraus).unwrap();
        let direct = choi_apply(&j, &rho).unwrap();
        let kraus = rho.apply_map(&j.input, &j.output, &g.kraus).unwrap();
        assert_eq!(direct.sites, kraus.sites);
        assert!(linalg::max_abs(&(direct.mat - kraus.mat)) < 1e-13);
    }

    #[test]
    fn identity_channel_choi_is_omega() {
        let j = gate_to_choi(&crate::channel::identity_gate(vec![0, 1]));
        assert!(linalg::max_abs(&(j.mat - identity_choi_mat(4))) < 1e-14);
    }

    #[test]
    fn choi_apply_round_trips_gate_action() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = random_channel_gate(vec![0, 1], 2, &mut rng);
        let x = DensityMatrix::raw(vec![0, 1], linalg::gaussian_matrix(4, 4, &mut rng)).unwrap();
        let want = g.apply(&x).unwrap();
        let got = choi_apply(&gate_to_choi(&g), &x).unwrap();
        assert!(linalg::max_abs(&(want.mat - got.mat)) < 1e-10);
    }

    #[test]
    fn reset_choi_is_trace_preserving() {
        let j = gate_to_choi(&reset_channel(&region([3, 4])));
        let (min, tp) = j.cptp_residuals();
        assert!(min > -1e-12 && tp < 1e-12);
    }

    #[test]
    fn kraus_round_trip_preserves_choi() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let g = random_channel_gate(vec![0], 3, &mut rng);
        let j = gate_to_choi(&g);
        let j2 = ChoiMatrix::from_kraus(vec![0], vec![0], &j.to_kraus()).unwrap();
        assert!(linalg::max_abs(&(j.mat - j2.mat)) < 1e-12);
    }
}
