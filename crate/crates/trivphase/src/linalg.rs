//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Multi-qubit operators use
//! little-endian bit order: bit `j` of a basis index is qubit `j` of the
//! register.

use nalgebra::{DMatrix, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn zeros(rows: usize, cols: usize) -> Mat {
    Mat::zeros(rows, cols)
}

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn hermitian_part(m: &Mat) -> Mat {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &Mat) -> C64 {
    m.trace()
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Projector `|i><j|` in dimension `d`.
pub fn unit(d: usize, i: usize, j: usize) -> Mat {
    let mut m = zeros(d, d);
    m[(i, j)] = ONE;
    m
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

pub fn eigh(m: &Mat) -> Eigh {
    let h = hermitian_part(m);
    let se = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(m.nrows(), idx.len(), |r, c| se.eigenvectors[(r, idx[c])]);
    Eigh { values, vectors }
}

impl Eigh {
    /// `V diag(f(lambda)) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> Mat {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (c, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for r in 0..d {
                scaled[(r, c)] *= fv;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    eigh(m).map(|x| C64::new(f(x), 0.0))
}

/// Square root of a PSD matrix; negative round-off is clamped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    herm_fn(m, |x| x.max(0.0).sqrt())
}

/// `m^p` for PSD `m`. For negative `p` the power is taken on the support
/// (eigenvalues above `cutoff`), i.e. a pseudo-inverse power.
pub fn psd_power(m: &Mat, p: f64, cutoff: f64) -> Mat {
    herm_fn(m, |x| if x > cutoff { x.powf(p) } else { 0.0 })
}

/// Trace norm of a Hermitian matrix from its eigenvalues.
pub fn trace_norm_herm(m: &Mat) -> f64 {
    eigh(m).values.iter().map(|x| x.abs()).sum()
}

/// Trace norm of an arbitrary matrix, via the eigenvalues of `m^dagger m`.
pub fn trace_norm(m: &Mat) -> f64 {
    let g = m.adjoint() * m;
    eigh(&g).values.iter().map(|x| x.max(0.0).sqrt()).sum()
}

/// Von Neumann entropy in bits of a density matrix (`0 log 0 = 0`).
pub fn entropy_bits(m: &Mat) -> f64 {
    eigh(m)
        .values
        .iter()
        .filter(|&&x| x > 1e-15)
        .map(|&x| -x * x.log2())
        .sum()
}

/// Matrix with `d` columns reinterpreted in place: computes `(op (x) I_high) x`
/// where `op` acts on the low `log2(din)` qubits of the row index.
pub fn left_mul_low(op: &Mat, x: Mat) -> Mat {
    let din = op.ncols();
    let dout = op.nrows();
    let rows = x.nrows();
    let cols = x.ncols();
    assert_eq!(rows % din, 0, "operator does not divide the register");
    let high = rows / din;
    let r = x.reshape_generic(Dyn(din), Dyn(high * cols));
    let y = op * r;
    y.reshape_generic(Dyn(dout * high), Dyn(cols))
}

/// `sum_k (K_k (x) I) x (K_k (x) I)^dagger` with the Kraus operators acting
/// on the low qubits.
pub fn kraus_low(kraus: &[Mat], x: &Mat) -> Mat {
    let mut out: Option<Mat> = None;
    for k in kraus {
        let t = left_mul_low(k, x.clone());
        let w = left_mul_low(k, t.adjoint()).adjoint();
        out = Some(match out {
            Some(acc) => acc + w,
            None => w,
        });
    }
    out.expect("empty Kraus list")
}

/// Superoperator `sum_k K_k (x) conj(K_k)` indexed `[(a, b), (i, j)] = a * d + b, i * d + j`.
pub fn superoperator(kraus: &[Mat]) -> Mat {
    let d = kraus[0].nrows();
    let din = kraus[0].ncols();
    let mut s = zeros(d * d, din * din);
    for k in kraus {
        for a in 0..d {
            for b in 0..d {
                for i in 0..din {
                    let kai = k[(a, i)];
                    if kai == ZERO {
                        continue;
                    }
                    for j in 0..din {
                        s[(a * d + b, i * din + j)] += kai * k[(b, j)].conj();
                    }
                }
            }
        }
    }
    s
}

fn bit_offsets(bits: &[usize]) -> Vec<usize> {
    (0..1usize << bits.len())
        .map(|a| bits.iter().enumerate().fold(0, |o, (j, &b)| o | (((a >> j) & 1) << b)))
        .collect()
}

/// Applies a square superoperator (see [`superoperator`]) to the qubits at
/// bit positions `bits` of an `nq`-qubit operator; bit `j` of the local
/// index is qubit `bits[j]`.
pub fn apply_superop_bits(m: &Mat, superop: &Mat, nq: usize, bits: &[usize]) -> Mat {
    let off = bit_offsets(bits);
    let d = off.len();
    let mask: usize = bits.iter().map(|b| 1usize << b).sum();
    let bases: Vec<usize> = (0..1usize << nq).filter(|x| x & mask == 0).collect();
    let mut out = zeros(m.nrows(), m.ncols());
    let mut v = vec![ZERO; d * d];
    for &cb in &bases {
        for &rb in &bases {
            for i in 0..d {
                for j in 0..d {
                    v[i * d + j] = m[(rb + off[i], cb + off[j])];
                }
            }
            for a in 0..d {
                for b in 0..d {
                    let row = a * d + b;
                    let mut acc = ZERO;
                    for (x, &vx) in v.iter().enumerate() {
                        acc += superop[(row, x)] * vx;
                    }
                    out[(rb + off[a], cb + off[b])] = acc;
                }
            }
        }
    }
    out
}

/// Permutes qubits of a square operator: output qubit `j` is input qubit `perm[j]`.
pub fn permute_qubits(m: &Mat, perm: &[usize]) -> Mat {
    let d = m.nrows();
    let nq = perm.len();
    assert_eq!(d, 1 << nq);
    if perm.iter().enumerate().all(|(j, &p)| j == p) {
        return m.clone();
    }
    let map = index_map(perm);
    Mat::from_fn(d, d, |r, c| m[(map[r], map[c])])
}

/// Permutes the qubits of a vector: output qubit `j` is input qubit `perm[j]`.
pub fn permute_vector(v: &[C64], perm: &[usize]) -> Vec<C64> {
    let map = index_map(perm);
    map.iter().map(|&i| v[i]).collect()
}

fn index_map(perm: &[usize]) -> Vec<usize> {
    let nq = perm.len();
    (0..1usize << nq)
        .map(|o| {
            let mut i = 0;
            for (j, &p) in perm.iter().enumerate() {
                i |= ((o >> j) & 1) << p;
            }
            i
        })
        .collect()
}

/// Partial trace of an `nq`-qubit operator keeping bit positions `keep`;
/// kept qubit `j` of the result is input qubit `keep[j]`.
pub fn ptrace_bits(m: &Mat, nq: usize, keep: &[usize]) -> Mat {
    assert_eq!(m.nrows(), 1 << nq);
    let traced: Vec<usize> = (0..nq).filter(|q| !keep.contains(q)).collect();
    let offsets = |bits: &[usize]| -> Vec<usize> {
        (0..1usize << bits.len())
            .map(|a| {
                let mut o = 0;
                for (j, &b) in bits.iter().enumerate() {
                    o |= ((a >> j) & 1) << b;
                }
                o
            })
            .collect()
    };
    let ok = offsets(keep);
    let ot = offsets(&traced);
    let dk = ok.len();
    let mut out = zeros(dk, dk);
    for b in 0..dk {
        for a in 0..dk {
            let mut s = ZERO;
            for &t in &ot {
                s += m[(ok[a] + t, ok[b] + t)];
            }
            out[(a, b)] = s;
        }
    }
    out
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat {
    let g = gaussian_matrix(d, d, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q;
    for c in 0..d {
        let z = r[(c, c)];
        let ph = if z.norm() > 0.0 { z / z.norm() } else { ONE };
        for row in 0..d {
            u[(row, c)] *= ph;
        }
    }
    u
}

/// Random density matrix of the given rank (Ginibre ensemble).
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> Mat {
    let g = gaussian_matrix(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = m.trace().re;
    m.unscale(t)
}

/// Orthonormal Stinespring-style isometry from a Gaussian matrix.
pub fn isometry_from(a: &Mat) -> Mat {
    let g = a.adjoint() * a;
    let inv_sqrt = psd_power(&g, -0.5, 1e-300);
    a * inv_sqrt
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(8, &mut rng);
        let e = &u.adjoint() * &u - identity(8);
        assert!(max_abs(&e) < 1e-12);
    }

    #[test]
    fn ptrace_of_kron_recovers_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(4, 4, &mut rng);
        // kron(b, a): a occupies the low qubit
        let ab = kron(&b, &a);
        let ra = ptrace_bits(&ab, 3, &[0]);
        let rb = ptrace_bits(&ab, 3, &[1, 2]);
        assert!(max_abs(&(ra - &a)) < 1e-12);
        assert!(max_abs(&(rb - &b)) < 1e-12);
    }

    #[test]
    fn permutation_swaps_kron_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(2, 2, &mut rng);
        let p = permute_qubits(&kron(&b, &a), &[1, 0]);
        assert!(max_abs(&(p - kron(&a, &b))) < 1e-12);
    }

    #[test]
    fn kraus_low_matches_explicit_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = haar_unitary(2, &mut rng);
        let x = random_density(8, 3, &mut rng);
        let full = kron(&identity(4), &u);
        let want = &full * &x * full.adjoint();
        let got = kraus_low(&[u], &x);
        assert!(max_abs(&(got - want)) < 1e-12);
    }

    #[test]
    fn trace_norm_of_orthogonal_projectors() {
        let d = unit(2, 0, 0) - unit(2, 1, 1);
        assert!((trace_norm_herm(&d) - 2.0).abs() < 1e-14);
        assert!((trace_norm(&d) - 2.0).abs() < 1e-12);
    }
}
