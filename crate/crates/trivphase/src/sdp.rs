//! Small dense primal-dual interior-point solver for complex Hermitian SDPs:
//!
//! maximize `<C, X>` subject to `<A_i, X> = b_i`, `X ⪰ 0` (block diagonal),
//! with dual `minimize b·y` subject to `S = sum_i y_i A_i - C ⪰ 0`.
//!
//! The inner product is `<U, V> = Re Tr(U† V)`. Search directions are HKM
//! with a Mehrotra predictor-corrector step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, eigh, hermitian_part, Mat, C64};

/// Constraint matrix stored as its nonzero entries `(block, row, col, value)`,
/// with both triangles listed.
#[derive(Clone, Debug, Default)]
pub struct SparseHerm {
    pub entries: Vec<(usize, usize, usize, C64)>,
}

impl SparseHerm {
    pub fn push(&mut self, block: usize, r: usize, c: usize, v: C64) {
        self.entries.push((block, r, c, v));
    }

    fn inner(&self, x: &[Mat]) -> f64 {
        self.entries.iter().map(|&(b, r, c, v)| (v.conj() * x[b][(r, c)]).re).sum()
    }

    fn add_to(&self, out: &mut [Mat], scale: f64) {
        for &(b, r, c, v) in &self.entries {
            out[b][(r, c)] += v * scale;
        }
    }
}

/// Hermitian basis of `d x d` matrices, each as `(row, col, value)` entries:
/// `E_rr`, `E_rc + E_cr` and `i E_rc - i E_cr`.
pub fn hermitian_basis(d: usize) -> Vec<Vec<(usize, usize, C64)>> {
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        out.push(vec![(r, r, C64::new(1.0, 0.0))]);
        for c in r + 1..d {
            out.push(vec![(r, c, C64::new(1.0, 0.0)), (c, r, C64::new(1.0, 0.0))]);
            out.push(vec![(r, c, C64::new(0.0, 1.0)), (c, r, C64::new(0.0, -1.0))]);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub c: Vec<Mat>,
    pub a: Vec<SparseHerm>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 80 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<Mat>,
    pub y: Vec<f64>,
    pub s: Vec<Mat>,
    pub primal: f64,
    pub dual: f64,
    /// `||b - A(X)||_2`.
    pub primal_infeasibility: f64,
    /// Largest singular value of `C - A*(y) + S` over blocks.
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterationRow>,
}

impl SdpProblem {
    fn a_op(&self, x: &[Mat]) -> Vec<f64> {
        self.a.iter().map(|a| a.inner(x)).collect()
    }

    fn a_adj(&self, y: &[f64]) -> Vec<Mat> {
        let mut out: Vec<Mat> = self.blocks.iter().map(|&n| linalg::zeros(n, n)).collect();
        for (a, &yi) in self.a.iter().zip(y) {
            a.add_to(&mut out, yi);
        }
        out
    }

    pub fn objective(&self, x: &[Mat]) -> f64 {
        inner(&self.c, x)
    }
}

fn inner(u: &[Mat], v: &[Mat]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.iter().zip(b.iter()).map(|(p, q)| (p.conj() * q).re).sum::<f64>()).sum()
}

fn combine(a: &[Mat], b: &[Mat], sb: f64) -> Vec<Mat> {
    a.iter().zip(b).map(|(p, q)| p + q * C64::new(sb, 0.0)).collect()
}

fn herm(v: Vec<Mat>) -> Vec<Mat> {
    v.iter().map(hermitian_part).collect()
}

fn op_norm(v: &[Mat]) -> f64 {
    v.iter().map(|m| {
        let e = eigh(&hermitian_part(m));
        e.values.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    })
    .fold(0.0, f64::max)
}

fn inverse(m: &Mat) -> Option<Mat> {
    let h = hermitian_part(m);
    h.clone().cholesky().map(|c| c.inverse()).or_else(|| h.try_inverse())
}

/// Largest `α ≤ 1` keeping `M + α Δ ⪰ 0` (scaled by `frac`).
fn step_length(m: &[Mat], delta: &[Mat], frac: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (mb, db) in m.iter().zip(delta) {
        let l = match hermitian_part(mb).cholesky() {
            Some(c) => c.l(),
            None => return 0.0,
        };
        let linv = l.clone().try_inverse().unwrap_or_else(|| linalg::identity(l.nrows()));
        let t = hermitian_part(&(&linv * db * linv.adjoint()));
        let lam = eigh(&t).min();
        if lam < 0.0 {
            alpha = alpha.min(-frac / lam);
        }
    }
    alpha.min(1.0)
}

/// Solves the problem from the infeasible start `X = S = I`, `y = 0`.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let m = p.a.len();
    let mut x: Vec<Mat> = p.blocks.iter().map(|&n| linalg::identity(n)).collect();
    let mut s = x.clone();
    let mut y = vec![0.0; m];
    let n_total: usize = p.blocks.iter().sum();
    let bnorm = 1.0 + p.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = 1.0 + op_norm(&p.c);
    let mut log = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        let ax = p.a_op(&x);
        let rp: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = p.a_adj(&y);
        let rd: Vec<Mat> = p.c.iter().zip(&aty).zip(&s).map(|((c, a), s)| c - a + s).collect();
        let mu = inner(&x, &s) / n_total as f64;
        let primal = p.objective(&x);
        let dual: f64 = p.b.iter().zip(&y).map(|(b, y)| b * y).sum();
        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dinf = op_norm(&rd);
        let gap = (dual - primal).abs() / (1.0 + primal.abs() + dual.abs());
        log.push(IterationRow { iteration: it, objective: primal, gap: dual - primal });
        if gap < opts.tol && pinf / bnorm < opts.tol && dinf / cnorm < opts.tol {
            converged = true;
            break;
        }
        let sinv: Vec<Mat> = match s.iter().map(inverse).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => break,
        };
        // Schur complement M_ij = <A_i, X A_j S^{-1}>
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let mut w: Vec<Option<Mat>> = vec![None; p.blocks.len()];
            let mut t: Vec<Mat> = p.blocks.iter().map(|&n| linalg::zeros(n, n)).collect();
            let mut touched = vec![false; p.blocks.len()];
            for &(b, r, c, v) in &p.a[j].entries {
                let col = x[b].column(r) * v;
                let mut tc = t[b].column_mut(c);
                tc += col;
                touched[b] = true;
            }
            for b in 0..p.blocks.len() {
                if touched[b] {
                    w[b] = Some(&t[b] * &sinv[b]);
                }
            }
            for i in 0..m {
                let mut acc = 0.0;
                for &(b, r, c, v) in &p.a[i].entries {
                    if let Some(wb) = &w[b] {
                        acc += (v.conj() * wb[(r, c)]).re;
                    }
                }
                schur[(i, j)] = acc;
            }
        }
        let schur = (&schur + schur.transpose()) * 0.5;
        let chol = schur.clone().cholesky();
        let lu = if chol.is_none() { Some(schur.clone().lu()) } else { None };
        let solve_y = |rhs: &[f64]| -> Option<Vec<f64>> {
            let v = nalgebra::DVector::from_column_slice(rhs);
            let sol = match (&chol, &lu) {
                (Some(c), _) => Some(c.solve(&v)),
                (None, Some(l)) => l.solve(&v),
                _ => None,
            }?;
            Some(sol.iter().copied().collect())
        };
        let x_rd_sinv: Vec<Mat> = x.iter().zip(&rd).zip(&sinv).map(|((x, r), si)| x * r * si).collect();
        let direction = |g: &[Mat]| -> Option<(Vec<Mat>, Vec<f64>, Vec<Mat>)> {
            let base = combine(g, &x_rd_sinv, 1.0);
            let a_base = p.a_op(&base);
            let rhs: Vec<f64> = a_base.iter().zip(&rp).map(|(a, r)| a - r).collect();
            let dy = solve_y(&rhs)?;
            let ds: Vec<Mat> = combine(&p.a_adj(&dy), &rd, -1.0);
            let dx: Vec<Mat> =
                herm(g.iter().zip(&x).zip(&ds).zip(&sinv).map(|(((g, x), d), si)| g - x * d * si).collect());
            Some((dx, dy, ds))
        };
        // predictor
        let g_aff: Vec<Mat> = x.iter().map(|x| -x).collect();
        let Some((dx_a, _, ds_a)) = direction(&g_aff) else { break };
        let ap = step_length(&x, &dx_a, 1.0);
        let ad = step_length(&s, &ds_a, 1.0);
        let mu_aff = inner(&combine(&x, &dx_a, ap), &combine(&s, &ds_a, ad)) / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        // corrector
        let g: Vec<Mat> = x
            .iter()
            .zip(&sinv)
            .zip(dx_a.iter().zip(&ds_a))
            .map(|((x, si), (dxa, dsa))| si * C64::new(sigma * mu, 0.0) - x - dxa * dsa * si)
            .collect();
        let Some((dx, dy, ds)) = direction(&g) else { break };
        let ap = step_length(&x, &dx, 0.98);
        let ad = step_length(&s, &ds, 0.98);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        x = herm(combine(&x, &dx, ap));
        y = y.iter().zip(&dy).map(|(y, d)| y + ad * d).collect();
        s = herm(combine(&s, &ds, ad));
    }
    let ax = p.a_op(&x);
    let primal_infeasibility = p.b.iter().zip(&ax).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let aty = p.a_adj(&y);
    let rd: Vec<Mat> = p.c.iter().zip(&aty).zip(&s).map(|((c, a), s)| c - a + s).collect();
    SdpSolution {
        primal: p.objective(&x),
        dual: p.b.iter().zip(&y).map(|(b, y)| b * y).sum(),
        primal_infeasibility,
        dual_infeasibility: op_norm(&rd),
        x,
        y,
        s,
        iterations,
        converged,
        log,
    }
}

/// Upper bound on the optimum valid for any primal-feasible `X` with
/// `sum_b Tr X_b <= trace_bound`: `<C, X> = b·y - <A*(y) - C, X>`, and the
/// second term is at least `λ_min(A*(y) - C) Tr X`.
pub fn certified_upper_bound(p: &SdpProblem, sol: &SdpSolution, trace_bound: f64) -> f64 {
    let aty = p.a_adj(&sol.y);
    let slack: Vec<Mat> = aty.iter().zip(&p.c).map(|(a, c)| a - c).collect();
    let deficit = slack.iter().map(|m| (-eigh(&hermitian_part(m)).min()).max(0.0)).fold(0.0, f64::max);
    sol.dual + deficit * trace_bound
}
