//! Learning local extension and recovery maps `BE -> BC` from marginals:
//! the fidelity-of-recovery SDP and a Petz baseline.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::choi::{choi_apply, ChoiMatrix};
use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::linalg::{self, eigh, herm_fn, hermitian_part, permute_qubits, C64};
use crate::recovery::{petz_map, PetzKind};
use crate::sdp::{self, hermitian_basis, IterationRow, SdpOptions, SdpProblem, SparseHerm};
use crate::state::{fidelity, trace_distance, DensityMatrix};

/// Largest `A_in ∪ B ∪ C ∪ E` the SDP accepts.
pub const SDP_MAX_QUBITS: usize = 7;
/// Largest `A_in ∪ B ∪ C` the SDP accepts; the Schur complement grows as `4^{2w}`.
pub const SDP_MAX_TARGET_QUBITS: usize = 5;

fn union(a: &Region, b: &Region) -> Region {
    a.union(b).copied().collect()
}

/// Marginals and roles of one learning step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryProblem {
    /// `ρ_{A_in B C}`.
    pub target: DensityMatrix,
    /// `ρ_{A_in B E}`.
    pub input: DensityMatrix,
    pub a_in: Region,
    pub b: Region,
    pub c: Region,
    pub e: Region,
    pub eps_sdp: f64,
}

impl RecoveryProblem {
    pub fn new(
        target: DensityMatrix,
        input: DensityMatrix,
        a_in: Region,
        b: Region,
        c: Region,
        e: Region,
        eps_sdp: f64,
    ) -> Result<Self> {
        let roles = [&a_in, &b, &c, &e];
        for (i, r) in roles.iter().enumerate() {
            for s in roles.iter().skip(i + 1) {
                if !r.is_disjoint(s) {
                    return Err(Error::InvalidArgument("learning roles overlap".into()));
                }
            }
        }
        let want_t: Vec<usize> = union(&union(&a_in, &b), &c).into_iter().collect();
        let want_i: Vec<usize> = union(&union(&a_in, &b), &e).into_iter().collect();
        if target.sites != want_t {
            return Err(Error::LabelMismatch(format!("target on {:?}, roles need {want_t:?}", target.sites)));
        }
        if input.sites != want_i {
            return Err(Error::LabelMismatch(format!("input on {:?}, roles need {want_i:?}", input.sites)));
        }
        Ok(Self { target, input, a_in, b, c, e, eps_sdp })
    }

    /// Builds the problem from marginals of one state (or any superset marginal).
    pub fn from_state(
        state: &DensityMatrix,
        a_in: &Region,
        b: &Region,
        c: &Region,
        e: &Region,
        eps_sdp: f64,
    ) -> Result<Self> {
        let target = state.partial_trace(&union(&union(a_in, b), c))?;
        let input = state.partial_trace(&union(&union(a_in, b), e))?;
        Self::new(target, input, a_in.clone(), b.clone(), c.clone(), e.clone(), eps_sdp)
    }

    pub fn map_input(&self) -> Vec<usize> {
        union(&self.b, &self.e).into_iter().collect()
    }

    pub fn map_output(&self) -> Vec<usize> {
        union(&self.b, &self.c).into_iter().collect()
    }

    /// Trace distance between the `A_in B` marginals of target and input.
    pub fn consistency(&self) -> Result<f64> {
        let ab = union(&self.a_in, &self.b);
        trace_distance(&self.target.partial_trace(&ab)?, &self.input.partial_trace(&ab)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    /// Interior-point run converged; `upper_bound` comes from its dual iterate.
    DualityGap,
    /// Interior-point run stopped early; the bound is from the last dual iterate.
    Stalled,
    /// The Petz baseline beat the solver output and was returned instead.
    PetzFallback,
    /// Constructed map, no optimality claim.
    Baseline,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedMap {
    pub choi: ChoiMatrix,
    /// Root fidelity `F(ρ_{A_in BC}, Φ(ρ_{A_in BE}))` on the problem marginals.
    pub fidelity: f64,
    pub distance: f64,
    /// Upper bound on the optimal fidelity (1 when nothing better is known).
    pub upper_bound: f64,
    pub certificate: Certificate,
    pub residuals: CptpResidual,
    pub iterations: usize,
    #[serde(default)]
    pub log: Vec<IterationRow>,
}

impl LearnedMap {
    /// `upper_bound - fidelity`, the certified distance from optimality.
    pub fn gap(&self) -> f64 {
        (self.upper_bound - self.fidelity).max(0.0)
    }

    /// Iteration log as CSV `iteration,objective,gap`.
    pub fn write_log<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.log {
            wr.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptpResidual {
    /// `max(0, -λ_min(J))`.
    pub psd_violation: f64,
    /// `||Tr_out J - I||` in operator norm.
    pub tp_violation: f64,
}

pub fn cptp_residual(j: &ChoiMatrix) -> CptpResidual {
    let psd_violation = (-eigh(&hermitian_part(&j.mat)).min()).max(0.0);
    let diff = hermitian_part(&(j.output_trace() - linalg::identity(j.din())));
    let e = eigh(&diff);
    let tp_violation = e.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    CptpResidual { psd_violation, tp_violation }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MapEvaluation {
    pub fidelity: f64,
    pub trace_distance: f64,
}

/// Applies `map` to `input` and compares with `target` (both on the same register afterwards).
pub fn evaluate_map(map: &ChoiMatrix, input: &DensityMatrix, target: &DensityMatrix) -> Result<MapEvaluation> {
    let out = choi_apply(map, input)?;
    Ok(MapEvaluation { fidelity: fidelity(&out, target)?, trace_distance: trace_distance(&out, target)? })
}

/// Positions of `first` then `rest` within `sites`: the permutation that
/// puts `first` on the low qubits.
fn low_first(sites: &[usize], first: &[usize], rest: &[usize]) -> Vec<usize> {
    first.iter().chain(rest).map(|s| sites.iter().position(|x| x == s).expect("site present")).collect()
}

/// Forces a Hermitian matrix onto the channel set: clip negative
/// eigenvalues, then normalize `Tr_out J = I`.
pub fn project_to_channel(j: &ChoiMatrix) -> ChoiMatrix {
    let psd = herm_fn(&hermitian_part(&j.mat), |x| x.max(0.0));
    let mut out = ChoiMatrix { input: j.input.clone(), output: j.output.clone(), mat: psd };
    // a vanishing input block would make the normalization singular
    let t = out.output_trace();
    if eigh(&hermitian_part(&t)).min() < 1e-12 {
        let eps = 1e-12;
        out.mat += linalg::identity(out.mat.nrows()).scale(eps / out.dout() as f64);
    }
    out.tp_projected()
}

/// Eigenvalues of the target below this (relative to the largest) are
/// treated as outside its support.
const SUPPORT_CUTOFF: f64 = 1e-10;

/// Builds the fidelity SDP. With `V` an isometry onto the support of
/// `ρ_target = V ρ̃ V†`, block 0 is `[[P, Z], [Z†, Q]]` of size `2r` and
/// block 1 is the Choi matrix `J` of `BE -> BC`; constraints `P = ρ̃`,
/// `Q = V† Φ_J(ρ_input) V`, `Tr_out J = I`; objective `Re Tr Z`.
pub fn fidelity_sdp(problem: &RecoveryProblem) -> Result<(SdpProblem, usize)> {
    let inp = problem.map_input();
    let out = problem.map_output();
    let a_in: Vec<usize> = problem.a_in.iter().copied().collect();
    let (din, dout, da) = (1usize << inp.len(), 1usize << out.len(), 1usize << a_in.len());
    let d = da * dout;
    let rho = permute_qubits(&problem.target.mat, &low_first(&problem.target.sites, &out, &a_in));
    let sigma = permute_qubits(&problem.input.mat, &low_first(&problem.input.sites, &inp, &a_in));
    let e = eigh(&hermitian_part(&rho));
    let top = e.values.iter().fold(0.0f64, |a, &x| a.max(x));
    let keep: Vec<usize> = (0..d).filter(|&k| e.values[k] > SUPPORT_CUTOFF * top).collect();
    let r = keep.len();
    let (v, rho_s) = if r == d {
        (None, rho)
    } else {
        let v = linalg::Mat::from_fn(d, r, |i, k| e.vectors[(i, keep[k])]);
        let rs = linalg::Mat::from_fn(r, r, |i, k| if i == k { C64::new(e.values[keep[i]], 0.0) } else { C64::new(0.0, 0.0) });
        (Some(v), rs)
    };
    let mut c = linalg::zeros(2 * r, 2 * r);
    for i in 0..r {
        c[(i, r + i)] = C64::new(0.5, 0.0);
        c[(r + i, i)] = C64::new(0.5, 0.0);
    }
    let dj = din * dout;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let basis = hermitian_basis(r);
    for h in &basis {
        let mut sh = SparseHerm::default();
        let mut val = 0.0;
        for &(i, k, x) in h {
            sh.push(0, i, k, x);
            val += (x.conj() * rho_s[(i, k)]).re;
        }
        a.push(sh);
        b.push(val);
    }
    for h in &basis {
        let mut sh = SparseHerm::default();
        for &(i, k, x) in h {
            sh.push(0, r + i, r + k, x);
        }
        // entries of V h V† on the full A_in BC register
        let full: Vec<(usize, usize, C64)> = match &v {
            None => h.clone(),
            Some(v) => {
                let mut hm = linalg::zeros(r, r);
                for &(i, k, x) in h {
                    hm[(i, k)] += x;
                }
                let big = v * hm * v.adjoint();
                let mut ent = Vec::new();
                for i in 0..d {
                    for k in 0..d {
                        if big[(i, k)].norm() > 1e-15 {
                            ent.push((i, k, big[(i, k)]));
                        }
                    }
                }
                ent
            }
        };
        let mut g = linalg::zeros(dj, dj);
        for &(rr, cc, x) in &full {
            let (alpha, aa) = (rr / dout, rr % dout);
            let (beta, bb) = (cc / dout, cc % dout);
            for i in 0..din {
                for j in 0..din {
                    g[(i * dout + aa, j * dout + bb)] += x * sigma[(alpha * din + i, beta * din + j)].conj();
                }
            }
        }
        for rr in 0..dj {
            for cc in 0..dj {
                if g[(rr, cc)] != C64::new(0.0, 0.0) {
                    sh.push(1, rr, cc, -g[(rr, cc)]);
                }
            }
        }
        a.push(sh);
        b.push(0.0);
    }
    for f in hermitian_basis(din) {
        let mut sh = SparseHerm::default();
        let mut val = 0.0;
        for &(i, j, x) in &f {
            for o in 0..dout {
                sh.push(1, i * dout + o, j * dout + o, x);
            }
            if i == j {
                val += x.re;
            }
        }
        a.push(sh);
        b.push(val);
    }
    Ok((SdpProblem { blocks: vec![2 * r, dj], c: vec![c, linalg::zeros(dj, dj)], a, b }, din))
}

/// Maximizes the recovery fidelity over channels `BE -> BC`.
pub fn solve_fidelity_sdp(problem: &RecoveryProblem) -> Result<LearnedMap> {
    solve_fidelity_sdp_with(problem, &SdpOptions::default())
}

pub fn solve_fidelity_sdp_with(problem: &RecoveryProblem, opts: &SdpOptions) -> Result<LearnedMap> {
    let all = union(&union(&problem.a_in, &problem.b), &union(&problem.c, &problem.e));
    if all.len() > SDP_MAX_QUBITS {
        return Err(Error::DimensionCap { qubits: all.len(), cap: SDP_MAX_QUBITS });
    }
    if problem.target.nqubits() > SDP_MAX_TARGET_QUBITS {
        return Err(Error::DimensionCap { qubits: problem.target.nqubits(), cap: SDP_MAX_TARGET_QUBITS });
    }
    let (sdp_problem, din) = fidelity_sdp(problem)?;
    let sol = sdp::solve(&sdp_problem, opts);
    let upper = sdp::certified_upper_bound(&sdp_problem, &sol, 2.0 + din as f64).min(1.0);
    let raw = ChoiMatrix::new(problem.map_input(), problem.map_output(), sol.x[1].clone())?;
    let choi = project_to_channel(&raw);
    let eval = evaluate_map(&choi, &problem.input, &problem.target)?;
    let mut learned = LearnedMap {
        residuals: cptp_residual(&choi),
        choi,
        fidelity: eval.fidelity,
        distance: eval.trace_distance,
        upper_bound: upper.max(eval.fidelity),
        certificate: if sol.converged { Certificate::DualityGap } else { Certificate::Stalled },
        iterations: sol.iterations,
        log: sol.log,
    };
    if !sol.converged || learned.gap() > problem.eps_sdp {
        let petz = petz_baseline_extension(problem, PetzKind::Plain)?;
        if petz.fidelity > learned.fidelity {
            learned = LearnedMap {
                upper_bound: learned.upper_bound.max(petz.fidelity),
                certificate: Certificate::PetzFallback,
                log: learned.log,
                iterations: learned.iterations,
                ..petz
            };
        }
    }
    Ok(learned)
}

/// Discards `E`, then applies the Petz map `B -> BC` of `ρ_BC`.
pub fn petz_baseline_extension(problem: &RecoveryProblem, kind: PetzKind) -> Result<LearnedMap> {
    let rho_bc = problem.target.partial_trace(&union(&problem.b, &problem.c))?;
    let petz = petz_map(&rho_bc, &problem.b, &problem.c, kind)?;
    let choi = discard_then(&petz, &problem.e)?;
    let eval = evaluate_map(&choi, &problem.input, &problem.target)?;
    Ok(LearnedMap {
        residuals: cptp_residual(&choi),
        choi,
        fidelity: eval.fidelity,
        distance: eval.trace_distance,
        upper_bound: 1.0,
        certificate: Certificate::Baseline,
        iterations: 0,
        log: Vec::new(),
    })
}

/// Choi matrix of `map ∘ Tr_E`, a channel `(input ∪ E) -> output`.
pub fn discard_then(map: &ChoiMatrix, e: &Region) -> Result<ChoiMatrix> {
    if e.is_empty() {
        return Ok(map.clone());
    }
    let input: Vec<usize> = map.input.iter().copied().chain(e.iter().copied()).collect::<Region>().into_iter().collect();
    let kept: Vec<usize> = map.input.iter().map(|s| input.iter().position(|x| x == s).unwrap()).collect();
    let dropped: Vec<usize> = e.iter().map(|s| input.iter().position(|x| x == s).unwrap()).collect();
    let bits = |idx: usize, pos: &[usize]| pos.iter().enumerate().fold(0, |acc, (j, &p)| acc | (((idx >> p) & 1) << j));
    let (din, dout) = (1usize << input.len(), map.dout());
    let mut j = linalg::zeros(din * dout, din * dout);
    for i in 0..din {
        for k in 0..din {
            if bits(i, &dropped) != bits(k, &dropped) {
                continue;
            }
            let (bi, bk) = (bits(i, &kept), bits(k, &kept));
            for a in 0..dout {
                for b in 0..dout {
                    j[(i * dout + a, k * dout + b)] = map.mat[(bi * dout + a, bk * dout + b)];
                }
            }
        }
    }
    ChoiMatrix::new(input, map.output.clone(), j)
}

/// Replacement channel `X ↦ Tr(X) ρ` on the sites of `rho`, as a Choi matrix.
pub fn replacement_channel(rho: &DensityMatrix) -> Result<ChoiMatrix> {
    let d = rho.dim();
    let j = linalg::kron(&linalg::identity(d), &hermitian_part(&rho.mat));
    ChoiMatrix::new(rho.sites.clone(), rho.sites.clone(), j)
}

/// A fixed map evaluated on exact and on perturbed patch marginals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCheck {
    pub eps_lt: f64,
    /// Error on the exact marginals.
    pub base: f64,
    /// Error on the perturbed marginals.
    pub distance: f64,
    /// `base + 2 ε_LT`.
    pub bound: f64,
    pub pass: bool,
}

/// `eps_lt` must bound the trace distance between the two patch states the
/// problems were built from.
pub fn perturbation_check(
    map: &ChoiMatrix,
    truth: &RecoveryProblem,
    perturbed: &RecoveryProblem,
    eps_lt: f64,
) -> Result<PerturbationCheck> {
    let base = evaluate_map(map, &truth.input, &truth.target)?.trace_distance;
    let distance = evaluate_map(map, &perturbed.input, &perturbed.target)?.trace_distance;
    let bound = base + 2.0 * eps_lt;
    Ok(PerturbationCheck { eps_lt, base, distance, bound, pass: distance <= bound + 1e-8 })
}

/// A map learned from perturbed marginals, evaluated on the full state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeCheck {
    pub eps_li: f64,
    pub eps_lt: f64,
    /// Slack of the learned map on the perturbed marginals beyond `ε_LI + 2ε_LT`.
    pub eps_sdp: f64,
    /// Error on the perturbed patch marginals.
    pub learned_distance: f64,
    /// `||ρ_ABC - Φ(ρ_ABE)||_1` with the full `A`.
    pub global_distance: f64,
    /// `3ε_LI + 4ε_LT + ε_SDP`.
    pub bound: f64,
    pub pass: bool,
}

pub fn composite_check(
    learned: &LearnedMap,
    state: &DensityMatrix,
    a: &Region,
    problem: &RecoveryProblem,
    eps_li: f64,
    eps_lt: f64,
) -> Result<CompositeCheck> {
    let full = RecoveryProblem::from_state(state, a, &problem.b, &problem.c, &problem.e, problem.eps_sdp)?;
    let global_distance = evaluate_map(&learned.choi, &full.input, &full.target)?.trace_distance;
    let eps_sdp = (learned.distance - eps_li - 2.0 * eps_lt).max(0.0);
    let bound = 3.0 * eps_li + 4.0 * eps_lt + eps_sdp;
    Ok(CompositeCheck {
        eps_li,
        eps_lt,
        eps_sdp,
        learned_distance: learned.distance,
        global_distance,
        bound,
        pass: global_distance <= bound + 1e-8,
    })
}
