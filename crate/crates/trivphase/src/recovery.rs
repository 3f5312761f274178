//! Conditional mutual information, Petz and twirled Petz recovery maps, the
//! Fawzi–Renner recoverability check and a CMI decay diagnostic.

use serde::{Deserialize, Serialize};

use crate::choi::ChoiMatrix;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg::{self, eigh, identity, Mat, ZERO};
use crate::state::{trace_distance, DensityMatrix};

/// Weight given to the maximally mixed state when regularizing references.
pub const REGULARIZATION: f64 = 1e-9;

/// Default number of quadrature nodes for the twirled map.
pub const DEFAULT_NODES: usize = 64;

/// `I(A:C|B)` in bits, with round-off below `1e-9` clamped to zero.
pub fn cmi(state: &DensityMatrix, a: &Region, b: &Region, c: &Region) -> Result<f64> {
    let disjoint = a.is_disjoint(b) && a.is_disjoint(c) && b.is_disjoint(c);
    if !disjoint {
        return Err(Error::InvalidArgument("CMI regions must be disjoint".into()));
    }
    let v = crate::state::conditional_mutual_information(state, a, b, c)?;
    Ok(if v < 0.0 && v > -1e-9 { 0.0 } else { v })
}

/// Angle density `f(θ) = π / (2 cosh(πθ) + 2)` of the twirled map.
pub fn twirl_density(theta: f64) -> f64 {
    std::f64::consts::PI / (2.0 * (std::f64::consts::PI * theta).cosh() + 2.0)
}

/// Quadrature for `∫ f(θ) g(θ) dθ`: trapezoid rule in `t` with `θ = 2 sinh t`
/// on `t ∈ [-3, 3]`. Returns `(nodes, weights)`, weights summing to one.
pub fn twirl_quadrature(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let nodes = nodes.max(3);
    let t_max = 3.0;
    let h = 2.0 * t_max / (nodes - 1) as f64;
    let mut theta = Vec::with_capacity(nodes);
    let mut w = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let t = -t_max + h * i as f64;
        let th = 2.0 * t.sinh();
        let edge = if i == 0 || i + 1 == nodes { 0.5 } else { 1.0 };
        theta.push(th);
        w.push(edge * h * twirl_density(th) * 2.0 * t.cosh());
    }
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    (theta, w)
}

/// Raw quadrature mass before normalization, for checking the rule.
pub fn twirl_quadrature_mass(nodes: usize) -> f64 {
    let nodes = nodes.max(3);
    let t_max = 3.0;
    let h = 2.0 * t_max / (nodes - 1) as f64;
    (0..nodes)
        .map(|i| {
            let t = -t_max + h * i as f64;
            let edge = if i == 0 || i + 1 == nodes { 0.5 } else { 1.0 };
            edge * h * twirl_density(2.0 * t.sinh()) * 2.0 * t.cosh()
        })
        .sum()
}

/// Closed form of `∫ f(θ) e^{-iθω} dθ`.
pub fn twirl_transform_exact(omega: f64) -> f64 {
    if omega.abs() < 1e-8 {
        1.0 - omega * omega / 6.0
    } else {
        omega / omega.sinh()
    }
}

fn regularized(m: &Mat) -> Mat {
    let d = m.nrows();
    m.scale(1.0 - REGULARIZATION) + identity(d).scale(REGULARIZATION / d as f64)
}

/// Which member of the Petz family to build.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PetzKind {
    Plain,
    /// Twirled map evaluated with the given number of quadrature nodes.
    Twirled(usize),
}

/// The Petz-family recovery channel `B -> BC` for the reference `rho_bc`,
/// with `N_C` the discard of `C` (re-prepared in `|0>` on the full register).
///
/// The map `X ↦ ∫ f(θ) ρ_BC^{(1-iθ)/2} (ρ_B^{(-1+iθ)/2} X ρ_B^{(-1-iθ)/2} ⊗ I_C) ρ_BC^{(1+iθ)/2} dθ`
/// is evaluated in the eigenbases of `ρ_BC` and `ρ_B`, where the θ-average
/// reduces to a scalar weight `φ(ω)` per eigenvalue combination.
pub fn petz_map(rho_bc: &DensityMatrix, b: &Region, c: &Region, kind: PetzKind) -> Result<ChoiMatrix> {
    match kind {
        PetzKind::Plain => petz_family(rho_bc, b, c, &|_| 1.0),
        PetzKind::Twirled(n) => {
            let (theta, w) = twirl_quadrature(n);
            petz_family(rho_bc, b, c, &|omega: f64| theta.iter().zip(&w).map(|(t, wi)| wi * (t * omega).cos()).sum())
        }
    }
}

/// Petz-family map with an arbitrary weight `φ(ω)` (`φ ≡ 1` is the plain map).
pub fn petz_family(rho_bc: &DensityMatrix, b: &Region, c: &Region, phi: &dyn Fn(f64) -> f64) -> Result<ChoiMatrix> {
    let bc: Region = b.union(c).copied().collect();
    if !b.is_disjoint(c) || rho_bc.region() != bc {
        return Err(Error::LabelMismatch(format!(
            "reference lives on {:?}, expected B ∪ C = {:?}",
            rho_bc.sites, bc
        )));
    }
    let rbc = regularized(&rho_bc.mat);
    let b_sites: Vec<usize> = b.iter().copied().collect();
    let c_sites: Vec<usize> = c.iter().copied().collect();
    let bc_sites: Vec<usize> = bc.iter().copied().collect();
    let pos_b: Vec<usize> = b_sites.iter().map(|s| bc_sites.binary_search(s).unwrap()).collect();
    let rb = linalg::ptrace_bits(&rbc, bc_sites.len(), &pos_b);

    let eb = eigh(&rbc);
    let em = eigh(&rb);
    if em.min() <= 0.0 || eb.min() <= 0.0 {
        return Err(Error::PetzSingular(em.min().min(eb.min())));
    }
    let db = rb.nrows();
    let dc = 1usize << c_sites.len();
    let dbc = rbc.nrows();

    // columns: |k> ⊗ |c> in the B-eigenbasis, laid out on the sorted BC register
    let order: Vec<usize> = b_sites.iter().chain(&c_sites).copied().collect();
    let mut prod = linalg::zeros(dbc, dbc);
    for cc in 0..dc {
        for k in 0..db {
            let col = k + db * cc;
            for i in 0..db {
                prod[(i + db * cc, col)] = em.vectors[(i, k)];
            }
        }
    }
    let perm: Vec<usize> = bc_sites.iter().map(|s| order.iter().position(|o| o == s).unwrap()).collect();
    let prod = permute_rows(&prod, &perm);
    let g = eb.vectors.adjoint() * prod;

    let lam: Vec<f64> = eb.values.clone();
    let mu: Vec<f64> = em.values.clone();
    // H_{kk'}[a,a'] = S_{kk'}[a,a'] Σ_c G[a,(k,c)] conj(G[a',(k',c)])
    let mut h = vec![linalg::zeros(dbc, dbc); db * db];
    for k in 0..db {
        for kp in 0..db {
            let hk = &mut h[k * db + kp];
            for a in 0..dbc {
                for ap in 0..dbc {
                    let mut acc = ZERO;
                    for cc in 0..dc {
                        acc += g[(a, k + db * cc)] * g[(ap, kp + db * cc)].conj();
                    }
                    if acc == ZERO {
                        continue;
                    }
                    let omega = 0.5 * (lam[a].ln() - lam[ap].ln() - mu[k].ln() + mu[kp].ln());
                    let s = (lam[a] * lam[ap] / (mu[k] * mu[kp])).sqrt() * phi(omega);
                    hk[(a, ap)] = acc * s;
                }
            }
        }
    }

    let mut j = linalg::zeros(db * dbc, db * dbc);
    for i in 0..db {
        for jj in 0..db {
            // Y = W^† |i><j| W
            let mut z = linalg::zeros(dbc, dbc);
            for k in 0..db {
                for kp in 0..db {
                    let y = em.vectors[(i, k)].conj() * em.vectors[(jj, kp)];
                    if y.norm() < 1e-300 {
                        continue;
                    }
                    z += h[k * db + kp].map(|v| v * y);
                }
            }
            let out = &eb.vectors * z * eb.vectors.adjoint();
            for a in 0..dbc {
                for bb in 0..dbc {
                    j[(i * dbc + a, jj * dbc + bb)] = out[(a, bb)];
                }
            }
        }
    }
    ChoiMatrix::new(b_sites, bc_sites, linalg::hermitian_part(&j))
}

/// Reorders rows: output row qubit `j` is input row qubit `perm[j]`.
fn permute_rows(m: &Mat, perm: &[usize]) -> Mat {
    let nq = perm.len();
    let map: Vec<usize> = (0..1usize << nq)
        .map(|o| {
            let mut i = 0;
            for (j, &p) in perm.iter().enumerate() {
                i |= ((o >> j) & 1) << p;
            }
            i
        })
        .collect();
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(map[r], c)])
}

/// Applies a recovery channel `B -> BC` to a state holding `B` (other sites
/// are carried along; existing `C` sites are discarded first).
pub fn apply_recovery(map: &ChoiMatrix, state: &DensityMatrix) -> Result<DensityMatrix> {
    crate::choi::choi_apply(map, state)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FawziRenner {
    /// `||map(ρ_AB) - ρ_ABC||_1^2 / (2 ln 2)`.
    pub lhs: f64,
    /// `I(A:C|B)` in bits.
    pub rhs: f64,
    pub distance: f64,
    pub pass: bool,
}

/// Compares the recovery error of `map` (a channel `B -> BC`) against the CMI.
pub fn fawzi_renner_check(
    state: &DensityMatrix,
    a: &Region,
    b: &Region,
    c: &Region,
    map: &ChoiMatrix,
) -> Result<FawziRenner> {
    let abc: Region = a.iter().chain(b).chain(c).copied().collect();
    let ab: Region = a.union(b).copied().collect();
    let target = state.partial_trace(&abc)?;
    let recovered = apply_recovery(map, &state.partial_trace(&ab)?)?;
    let distance = trace_distance(&recovered, &target)?;
    let lhs = distance * distance / (2.0 * std::f64::consts::LN_2);
    let rhs = cmi(state, a, b, c)?;
    Ok(FawziRenner { lhs, rhs, distance, pass: lhs <= rhs + 1e-6 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CmiProfile {
    /// `(r, I(A:C|B))` with `B` a centred segment of width `r`.
    pub rows: Vec<(usize, f64)>,
    /// Decay length from a log-linear fit over the strictly positive entries.
    pub xi: Option<f64>,
}

/// CMI of a 1D state across a centred separator of growing width.
pub fn cmi_decay_profile(state: &DensityMatrix, lattice: &Lattice, radii: &[usize]) -> Result<CmiProfile> {
    if lattice.k != 1 {
        return Err(Error::InvalidArgument("CMI decay profile is defined for chains".into()));
    }
    let n = lattice.n;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        if r + 2 > n {
            return Err(Error::InvalidArgument(format!("separator width {r} leaves no room on a chain of {n}")));
        }
        let left = (n - r) / 2;
        let a: Region = (0..left).collect();
        let b: Region = (left..left + r).collect();
        let c: Region = (left + r..n).collect();
        rows.push((r, cmi(state, &a, &b, &c)?));
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|(_, v)| *v > 1e-12).map(|&(r, v)| (r as f64, v.ln())).collect();
    let xi = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        (slope < 0.0).then(|| -1.0 / slope)
    } else {
        None
    };
    Ok(CmiProfile { rows, xi })
}

/// Fidelity between the target `ρ_{BC}`-extension and the recovered state.
pub fn recovery_fidelity(map: &ChoiMatrix, input: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    crate::state::fidelity(&apply_recovery(map, input)?, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region;
    use rand::SeedableRng;

    #[test]
    fn quadrature_mass_is_one() {
        assert!((twirl_quadrature_mass(64) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn product_reference_appends_marginal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let rb = DensityMatrix::raw(vec![0], linalg::random_density(2, 2, &mut rng)).unwrap();
        let rc = DensityMatrix::raw(vec![1], linalg::random_density(2, 2, &mut rng)).unwrap();
        let map = petz_map(&rb.tensor(&rc).unwrap(), &region([0]), &region([1]), PetzKind::Plain).unwrap();
        let x = DensityMatrix::raw(vec![0], linalg::random_density(2, 2, &mut rng)).unwrap();
        let out = apply_recovery(&map, &x).unwrap();
        let want = x.tensor(&rc).unwrap();
        assert!(trace_distance(&out, &want).unwrap() < 1e-7);
    }
}
