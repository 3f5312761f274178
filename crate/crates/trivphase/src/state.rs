//! Dense density matrices labelled by lattice sites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::linalg::{self, kraus_low, permute_qubits, ptrace_bits, Mat, C64, ONE};

/// Default cap on the number of simulated qubits.
pub const DEFAULT_QUBIT_CAP: usize = 12;

/// Operator on the qubits `sites` (sorted ascending). Bit `j` of a basis
/// index belongs to `sites[j]`.
///
/// The same type carries arbitrary operators (Choi probes, differences);
/// `check` asserts the density-matrix invariants where they are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub sites: Vec<usize>,
    #[serde(with = "crate::io::mat_serde")]
    pub mat: Mat,
}

fn sorted_unique(sites: &[usize]) -> bool {
    sites.windows(2).all(|w| w[0] < w[1])
}

impl DensityMatrix {
    /// Wraps a matrix without checking the state invariants.
    pub fn raw(sites: Vec<usize>, mat: Mat) -> Result<Self> {
        if !sorted_unique(&sites) {
            return Err(Error::LabelMismatch(format!("site labels {sites:?} must be strictly ascending")));
        }
        let d = 1usize << sites.len();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: mat.nrows() });
        }
        Ok(Self { sites, mat })
    }

    /// Wraps a matrix and checks Hermiticity, unit trace and positivity at `1e-8`.
    pub fn new(sites: Vec<usize>, mat: Mat) -> Result<Self> {
        let s = Self::raw(sites, mat)?;
        s.check(1e-8)?;
        Ok(s)
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let herm = linalg::max_abs(&(&self.mat - self.mat.adjoint()));
        if herm > tol {
            return Err(Error::InvalidArgument(format!("state is not Hermitian (deviation {herm:e})")));
        }
        let tr = self.mat.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::InvalidArgument(format!("state trace is {tr}")));
        }
        let min = linalg::eigh(&self.mat).min();
        if min < -tol {
            return Err(Error::InvalidArgument(format!("state has eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// `|0...0><0...0|` on `sites`.
    pub fn zero_state(sites: &Region) -> Self {
        let d = 1usize << sites.len();
        Self { sites: sites.iter().copied().collect(), mat: linalg::unit(d, 0, 0) }
    }

    /// Pure state `|psi><psi|`, normalizing `psi`.
    pub fn pure(sites: Vec<usize>, psi: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        let nrm = v.norm();
        if nrm == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let v = v.unscale(nrm);
        Self::raw(sites, &v * v.adjoint())
    }

    pub fn nqubits(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn region(&self) -> Region {
        self.sites.iter().copied().collect()
    }

    fn position(&self, site: usize) -> Option<usize> {
        self.sites.binary_search(&site).ok()
    }

    pub(crate) fn positions(&self, sites: &[usize]) -> Result<Vec<usize>> {
        sites
            .iter()
            .map(|&s| self.position(s))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::SupportNotContained { support: sites.to_vec(), sites: self.sites.clone() })
    }

    /// Reduced operator on `keep`.
    pub fn partial_trace(&self, keep: &Region) -> Result<Self> {
        let keep: Vec<usize> = keep.iter().copied().collect();
        let pos = self.positions(&keep)?;
        if pos.len() == self.sites.len() {
            return Ok(self.clone());
        }
        Ok(Self { sites: keep, mat: ptrace_bits(&self.mat, self.sites.len(), &pos) })
    }

    /// Traces out `drop` (sites not present are ignored).
    pub fn trace_out(&self, drop: &Region) -> Self {
        let keep: Region = self.sites.iter().copied().filter(|s| !drop.contains(s)).collect();
        self.partial_trace(&keep).expect("subset of own sites")
    }

    /// Tensor product with an operator on disjoint sites.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.sites.iter().any(|s| other.position(*s).is_some()) {
            return Err(Error::LabelMismatch("tensor factors share sites".into()));
        }
        // `other` on the high qubits, then sort
        let joined = linalg::kron(&other.mat, &self.mat);
        let order: Vec<usize> = self.sites.iter().chain(&other.sites).copied().collect();
        Ok(Self::reorder_sorted(order, joined))
    }

    /// Adds `|0><0|` on every site of `extra` not already present.
    pub fn with_zeros(&self, extra: &Region) -> Self {
        let new: Region = extra.iter().copied().filter(|s| self.position(*s).is_none()).collect();
        if new.is_empty() {
            return self.clone();
        }
        self.tensor(&Self::zero_state(&new)).expect("disjoint by construction")
    }

    /// Reorders an operator whose qubit `j` is `order[j]` into ascending site order.
    pub(crate) fn reorder_sorted(order: Vec<usize>, mat: Mat) -> Self {
        let mut sites = order.clone();
        sites.sort_unstable();
        let perm: Vec<usize> = sites.iter().map(|s| order.iter().position(|o| o == s).unwrap()).collect();
        Self { sites, mat: permute_qubits(&mat, &perm) }
    }

    /// Applies a channel whose input and output are the same sites, all held
    /// by the state, without reordering the register.
    pub fn apply_in_place(&self, support: &[usize], kraus: &[Mat]) -> Result<Self> {
        let pos = self.positions(support)?;
        let sup = linalg::superoperator(kraus);
        Ok(Self { sites: self.sites.clone(), mat: linalg::apply_superop_bits(&self.mat, &sup, self.sites.len(), &pos) })
    }

    /// Applies a map with Kraus operators from `input` sites to `output`
    /// sites. Sites in `output \ input` already held by the state are traced
    /// out first; the result lives on `(sites \ input) ∪ output`.
    pub fn apply_map(&self, input: &[usize], output: &[usize], kraus: &[Mat]) -> Result<Self> {
        let din = 1usize << input.len();
        let dout = 1usize << output.len();
        for k in kraus {
            if k.ncols() != din || k.nrows() != dout {
                return Err(Error::DimensionMismatch { expected: din * dout, actual: k.nrows() * k.ncols() });
            }
        }
        let fresh: Region = output.iter().copied().filter(|s| !input.contains(s)).collect();
        let base = self.trace_out(&fresh);
        let pos = base.positions(input)?;
        let rest: Vec<usize> = base.sites.iter().copied().filter(|s| !input.contains(s)).collect();
        let mut perm = pos;
        perm.extend(rest.iter().map(|s| base.position(*s).unwrap()));
        let moved = permute_qubits(&base.mat, &perm);
        let out = kraus_low(kraus, &moved);
        let order: Vec<usize> = output.iter().chain(&rest).copied().collect();
        Ok(Self::reorder_sorted(order, out))
    }

    /// Like [`apply_map`](Self::apply_map), but resets sites of `input \ output`
    /// to `|0>` so the site set is preserved.
    pub fn apply_placed(&self, input: &[usize], output: &[usize], kraus: &[Mat]) -> Result<Self> {
        let out = self.apply_map(input, output, kraus)?;
        let gone: Region = input.iter().copied().filter(|s| !output.contains(s)).collect();
        Ok(out.with_zeros(&gone))
    }

    /// Replaces the sites of `region` by `|0>` (the reset channel).
    pub fn reset(&self, region: &Region) -> Self {
        self.trace_out(region).with_zeros(region)
    }

    /// Clamps eigenvalues below zero (round-off) and renormalizes the trace.
    pub fn clamped(&self) -> Self {
        let m = linalg::herm_fn(&self.mat, |x| x.max(0.0));
        let t = m.trace().re;
        Self { sites: self.sites.clone(), mat: if t > 0.0 { m.unscale(t) } else { m } }
    }

    pub fn is_same_register(&self, other: &Self) -> Result<()> {
        if self.sites != other.sites {
            return Err(Error::LabelMismatch(format!("{:?} vs {:?}", self.sites, other.sites)));
        }
        Ok(())
    }

    pub fn entropy(&self) -> f64 {
        linalg::entropy_bits(&self.mat)
    }
}

/// `||a - b||_1`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.is_same_register(b)?;
    Ok(linalg::trace_norm_herm(&(&a.mat - &b.mat)).max(0.0))
}

/// `F(a, b) = ||sqrt(a) sqrt(b)||_1`.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.is_same_register(b)?;
    let sa = linalg::psd_sqrt(&a.mat);
    let sb = linalg::psd_sqrt(&b.mat);
    Ok(linalg::trace_norm(&(sa * sb)).clamp(0.0, 1.0 + 1e-12))
}

/// `I(A:C|B) = S(AB) + S(BC) - S(B) - S(ABC)` in bits.
pub fn conditional_mutual_information(rho: &DensityMatrix, a: &Region, b: &Region, c: &Region) -> Result<f64> {
    let union = |x: &Region, y: &Region| -> Region { x.union(y).copied().collect() };
    let ab = union(a, b);
    let bc = union(b, c);
    let abc = union(&ab, c);
    let s = |r: &Region| -> Result<f64> { Ok(rho.partial_trace(r)?.entropy()) };
    Ok(s(&ab)? + s(&bc)? - s(b)? - s(&abc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region;
    use crate::linalg::random_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bell_pair_marginal_is_maximally_mixed() {
        let h = 1.0 / 2f64.sqrt();
        let bell = DensityMatrix::pure(vec![0, 1], &[C64::new(h, 0.0), ONE * 0.0, ONE * 0.0, C64::new(h, 0.0)]).unwrap();
        let m = bell.partial_trace(&region([1])).unwrap();
        assert!(linalg::max_abs(&(m.mat - linalg::identity(2).scale(0.5))) < 1e-12);
    }

    #[test]
    fn tensor_then_trace_recovers_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DensityMatrix::raw(vec![1, 4], random_density(4, 4, &mut rng)).unwrap();
        let b = DensityMatrix::raw(vec![2], random_density(2, 2, &mut rng)).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.sites, vec![1, 2, 4]);
        assert!(linalg::max_abs(&(ab.partial_trace(&region([1, 4])).unwrap().mat - &a.mat)) < 1e-12);
        assert!(linalg::max_abs(&(ab.partial_trace(&region([2])).unwrap().mat - &b.mat)) < 1e-12);
    }

    #[test]
    fn map_creates_and_consumes_sites() {
        // move qubit 0 onto qubit 3 (identity map 0 -> 3)
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = DensityMatrix::raw(vec![0, 1], random_density(4, 4, &mut rng)).unwrap();
        let moved = a.apply_map(&[0], &[3], &[linalg::identity(2)]).unwrap();
        assert_eq!(moved.sites, vec![1, 3]);
        let back = moved.apply_map(&[3], &[0], &[linalg::identity(2)]).unwrap();
        assert!(linalg::max_abs(&(back.mat - &a.mat)) < 1e-12);
        let placed = a.apply_placed(&[0], &[3], &[linalg::identity(2)]).unwrap();
        assert_eq!(placed.sites, vec![0, 1, 3]);
        assert!((placed.partial_trace(&region([0])).unwrap().mat[(0, 0)].re - 1.0).abs() < 1e-12);
    }
}
