#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trivphase::linalg::{psd_power, psd_sqrt, random_density};
use trivphase::state::DensityMatrix;

pub type Mat = DMatrix<C64>;

pub fn random_state(sites: Vec<usize>, rank: usize, seed: u64) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 1 << sites.len();
    DensityMatrix::new(sites, random_density(d, rank, &mut rng)).unwrap()
}

/// Root fidelity, written out directly.
pub fn root_fidelity(a: &Mat, b: &Mat) -> f64 {
    let s = psd_sqrt(a);
    let m = &s * b * &s;
    let m = (&m + m.adjoint()).scale(0.5);
    psd_sqrt(&m).trace().re
}

/// Channel `B -> BC` with `A_in = {0}`, `B = {1}`, `C = {2}` parameterized
/// as `J = (T^{-1/2} ⊗ I) L L† (T^{-1/2} ⊗ I)` with `T = Tr_out L L†`.
pub fn oracle_objective(params: &[f64], sigma: &Mat, rho: &Mat) -> f64 {
    let (din, dout) = (2usize, 4usize);
    let dj = din * dout;
    let l = Mat::from_fn(dj, dj, |r, c| C64::new(params[2 * (r * dj + c)], params[2 * (r * dj + c) + 1]));
    let ll = &l * l.adjoint();
    let mut t = Mat::zeros(din, din);
    for i in 0..din {
        for j in 0..din {
            for a in 0..dout {
                t[(i, j)] += ll[(i * dout + a, j * dout + a)];
            }
        }
    }
    let tinv = psd_power(&t, -0.5, 1e-14);
    let mut n = Mat::zeros(dj, dj);
    for i in 0..din {
        for j in 0..din {
            for a in 0..dout {
                n[(i * dout + a, j * dout + a)] = tinv[(i, j)];
            }
        }
    }
    let jm = &n * ll * &n;
    let mut out = Mat::zeros(8, 8);
    for alpha in 0..2 {
        for beta in 0..2 {
            for a in 0..dout {
                for b in 0..dout {
                    let mut acc = C64::new(0.0, 0.0);
                    for i in 0..din {
                        for j in 0..din {
                            acc += sigma[(alpha + 2 * i, beta + 2 * j)] * jm[(i * dout + a, j * dout + b)];
                        }
                    }
                    out[(alpha + 2 * a, beta + 2 * b)] = acc;
                }
            }
        }
    }
    root_fidelity(rho, &out)
}

/// Best fidelity found by finite-difference ascent with restarts.
pub fn brute_force_optimum(sigma: &Mat, rho: &Mat, restarts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = 2 * 64;
    let mut best = 0.0f64;
    for _ in 0..restarts {
        let mut x: Vec<f64> = (0..np).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut f = oracle_objective(&x, sigma, rho);
        let mut step = 0.1;
        for _ in 0..3000 {
            let h = 1e-6;
            let g: Vec<f64> = (0..np)
                .map(|k| {
                    let mut xp = x.clone();
                    xp[k] += h;
                    let mut xm = x.clone();
                    xm[k] -= h;
                    (oracle_objective(&xp, sigma, rho) - oracle_objective(&xm, sigma, rho)) / (2.0 * h)
                })
                .collect();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-9 {
                break;
            }
            loop {
                let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b / gn).collect();
                let fc = oracle_objective(&cand, sigma, rho);
                if fc > f {
                    x = cand;
                    f = fc;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
            if step < 1e-12 {
                break;
            }
        }
        best = best.max(f);
    }
    best
}
