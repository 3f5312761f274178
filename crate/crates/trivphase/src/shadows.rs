//! Random single-qubit Pauli shadows, local marginal estimation, and the
//! exact-marginal oracle.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::linalg::{self, Mat, C64, I, ONE};
use crate::state::DensityMatrix;

/// Median-of-means batch count.
pub const BATCHES: usize = 10;
/// Largest region `estimate_marginal` accepts.
pub const REGION_CAP: usize = 8;
/// Calibration constant of [`required_samples`]; see the `calibrate_shadows` example.
pub const CALIBRATION_C0: f64 = 3.0;
/// Per-width constants of [`calibrated_samples`], entry `w - 1`; each is the
/// constant at which the 95th-percentile trace error on random full-rank
/// `w`-site states reaches `ε`, plus 30%. See the `calibrate_shadows` example.
pub const WIDTH_CALIBRATION: [f64; REGION_CAP] = [3.5, 3.6, 6.5, 12.0, 27.0, 60.0, 140.0, 340.0];

/// Measurement basis; the code doubles as the Pauli index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Basis {
    X = 1,
    Y = 2,
    Z = 3,
}

impl Basis {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Basis::X),
            2 => Ok(Basis::Y),
            3 => Ok(Basis::Z),
            _ => Err(Error::Format(format!("basis code {code}"))),
        }
    }

    /// Rotation `V` taking this basis' eigenvectors to `|0>, |1>`.
    fn rotation(self) -> Mat {
        let h = crate::channel::hadamard();
        match self {
            Basis::X => h,
            // H S^dagger
            Basis::Y => h * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, -I])),
            Basis::Z => linalg::identity(2),
        }
    }
}

/// Shots over sites `sites` (ascending); record `i` holds `bases[i*n..]` and `bits[i*n..]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowDataset {
    pub sites: Vec<usize>,
    pub seed: u64,
    bases: Vec<Basis>,
    bits: Vec<u8>,
}

impl ShadowDataset {
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn shots(&self) -> usize {
        if self.sites.is_empty() {
            0
        } else {
            self.bases.len() / self.sites.len()
        }
    }

    pub fn record(&self, i: usize) -> (&[Basis], &[u8]) {
        let n = self.n();
        (&self.bases[i * n..(i + 1) * n], &self.bits[i * n..(i + 1) * n])
    }

    /// Header `n: u32, shots: u64, seed: u64, sites: u32 * n`, then the
    /// 2-bit basis codes and the outcome bits, each byte-packed LSB first.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        w.write_all(&(self.shots() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for &s in &self.sites {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        let mut codes = vec![0u8; self.bases.len().div_ceil(4)];
        for (i, b) in self.bases.iter().enumerate() {
            codes[i / 4] |= (*b as u8) << (2 * (i % 4));
        }
        let mut bits = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            bits[i / 8] |= b << (i % 8);
        }
        w.write_all(&codes)?;
        w.write_all(&bits)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut u4 = [0u8; 4];
        let mut u8b = [0u8; 8];
        r.read_exact(&mut u4)?;
        let n = u32::from_le_bytes(u4) as usize;
        r.read_exact(&mut u8b)?;
        let m = u64::from_le_bytes(u8b) as usize;
        r.read_exact(&mut u8b)?;
        let seed = u64::from_le_bytes(u8b);
        if n > 64 || m.saturating_mul(n) > 1 << 34 {
            return Err(Error::Format(format!("implausible shadow header n={n} shots={m}")));
        }
        let mut sites = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut u4)?;
            sites.push(u32::from_le_bytes(u4) as usize);
        }
        let total = n * m;
        let mut codes = vec![0u8; total.div_ceil(4)];
        r.read_exact(&mut codes)?;
        let mut packed = vec![0u8; total.div_ceil(8)];
        r.read_exact(&mut packed)?;
        let bases = (0..total).map(|i| Basis::from_code((codes[i / 4] >> (2 * (i % 4))) & 3)).collect::<Result<Vec<_>>>()?;
        let bits = (0..total).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect();
        Ok(Self { sites, seed, bases, bits })
    }
}

/// Simulates `m` rounds of uniformly random single-qubit Pauli measurements
/// on every site, sampling outcomes by the Born rule from `state`.
pub fn collect_shadows(state: &DensityMatrix, m: usize, seed: u64) -> Result<ShadowDataset> {
    if m == 0 {
        return Err(Error::InvalidArgument("shot count must be at least 1".into()));
    }
    let n = state.nqubits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<Basis> = (0..m * n)
        .map(|_| match rng.random_range(0..3u8) {
            0 => Basis::X,
            1 => Basis::Y,
            _ => Basis::Z,
        })
        .collect();
    let mut bits = vec![0u8; m * n];
    let rotations = [Basis::X.rotation(), Basis::Y.rotation(), Basis::Z.rotation()];
    let shots: Vec<usize> = (0..m).collect();
    sample_level(state.mat.clone(), 0, n, &shots, &bases, &mut bits, &rotations, &mut rng);
    Ok(ShadowDataset { sites: state.sites.clone(), seed, bases, bits })
}

/// Measures qubit `j` (the low qubit of `mat`, which holds qubits `j..n`)
/// for every shot routed here, then recurses on the post-measurement blocks.
#[allow(clippy::too_many_arguments)]
fn sample_level(
    mat: Mat,
    j: usize,
    n: usize,
    shots: &[usize],
    bases: &[Basis],
    bits: &mut [u8],
    rotations: &[Mat; 3],
    rng: &mut ChaCha8Rng,
) {
    if j == n || shots.is_empty() {
        return;
    }
    for basis in [Basis::X, Basis::Y, Basis::Z] {
        let group: Vec<usize> = shots.iter().copied().filter(|&s| bases[s * n + j] == basis).collect();
        if group.is_empty() {
            continue;
        }
        let v = &rotations[basis as usize - 1];
        let rotated = linalg::kraus_low(std::slice::from_ref(v), &mat);
        let half = mat.nrows() / 2;
        let block = |o: usize| Mat::from_fn(half, half, |r, c| rotated[(2 * r + o, 2 * c + o)]);
        let (b0, b1) = (block(0), block(1));
        let p0 = b0.trace().re.max(0.0);
        let p1 = b1.trace().re.max(0.0);
        let p = if p0 + p1 > 0.0 { p0 / (p0 + p1) } else { 0.5 };
        let mut zero = Vec::new();
        let mut one = Vec::new();
        for s in group {
            if rng.random::<f64>() < p {
                zero.push(s);
            } else {
                bits[s * n + j] = 1;
                one.push(s);
            }
        }
        sample_level(b0, j + 1, n, &zero, bases, bits, rotations, rng);
        sample_level(b1, j + 1, n, &one, bases, bits, rotations, rng);
    }
}

/// Estimated local marginal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub region: Region,
    pub estimate: DensityMatrix,
    pub shots: usize,
    pub eps_lt: f64,
}

/// Raw (unprojected) Pauli-coefficient estimates `x_P = Tr(P ρ)` on the
/// region's qubits; index digit `j` (base 4) is the Pauli on qubit `j`.
pub fn pauli_coefficients(ds: &ShadowDataset, region: &Region) -> Result<Vec<f64>> {
    let pos = region_positions(ds, region)?;
    let w = pos.len();
    let m = ds.shots();
    if m == 0 {
        return Err(Error::EmptyDataset);
    }
    let batches = BATCHES.min(m);
    let mut sums = vec![vec![0.0; 1 << (2 * w)]; batches];
    for i in 0..m {
        let (b, o) = ds.record(i);
        let acc = &mut sums[i * batches / m];
        for subset in 0..1usize << w {
            let mut idx = 0;
            let mut val = 1.0;
            for (j, &p) in pos.iter().enumerate() {
                if subset >> j & 1 == 1 {
                    idx += (b[p] as usize) << (2 * j);
                    val *= if o[p] == 0 { 3.0 } else { -3.0 };
                }
            }
            acc[idx] += val;
        }
    }
    let counts: Vec<f64> = (0..batches).map(|k| ((k + 1) * m).div_ceil(batches) as f64 - (k * m).div_ceil(batches) as f64).collect();
    let len = 1 << (2 * w);
    Ok((0..len)
        .map(|p| {
            let mut means: Vec<f64> = (0..batches).map(|k| sums[k][p] / counts[k]).collect();
            median(&mut means)
        })
        .collect())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn region_positions(ds: &ShadowDataset, region: &Region) -> Result<Vec<usize>> {
    if region.len() > REGION_CAP {
        return Err(Error::RegionTooLarge { size: region.len(), cap: REGION_CAP });
    }
    region
        .iter()
        .map(|s| ds.sites.iter().position(|x| x == s))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::SupportNotContained { support: region.iter().copied().collect(), sites: ds.sites.clone() })
}

/// `2^{-w} sum_P x_P P`.
pub fn operator_from_pauli(coeffs: &[f64], w: usize) -> Mat {
    let d = 1usize << w;
    let single: Vec<Mat> = (0..4).map(crate::channel::pauli).collect();
    let mut out = linalg::zeros(d, d);
    for (p, &x) in coeffs.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for c in 0..d {
            let mut r = 0;
            let mut val = C64::new(x, 0.0);
            for j in 0..w {
                let t = (p >> (2 * j)) & 3;
                let cb = (c >> j) & 1;
                let rb = if t == 1 || t == 2 { cb ^ 1 } else { cb };
                val *= single[t][(rb, cb)];
                r |= rb << j;
            }
            out[(r, c)] += val;
        }
    }
    out.unscale(d as f64)
}

/// Euclidean projection of a real vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Nearest density matrix in Frobenius norm.
pub fn project_density(m: &Mat) -> Mat {
    let e = linalg::eigh(&linalg::hermitian_part(m));
    let p = project_simplex(e.values.as_slice());
    let mut out = linalg::zeros(m.nrows(), m.ncols());
    for (k, &lam) in p.iter().enumerate() {
        if lam > 0.0 {
            let v = e.vectors.column(k);
            out += v * v.adjoint() * C64::new(lam, 0.0);
        }
    }
    out
}

/// Median-of-means shadow estimate on `region`, projected to a density matrix.
pub fn estimate_marginal(ds: &ShadowDataset, region: &Region, eps_lt: f64) -> Result<MarginalEstimate> {
    if ds.shots() == 0 {
        return Err(Error::EmptyDataset);
    }
    let coeffs = pauli_coefficients(ds, region)?;
    let raw = operator_from_pauli(&coeffs, region.len());
    let est = if region.is_empty() { Mat::from_element(1, 1, ONE) } else { project_density(&raw) };
    Ok(MarginalEstimate {
        region: region.clone(),
        estimate: DensityMatrix::raw(region.iter().copied().collect(), est)?,
        shots: ds.shots(),
        eps_lt,
    })
}

/// `ceil(C0 * 4^w * ln(2n/δ) / ε_LT^2)`.
pub fn required_samples(n: usize, w: usize, eps_lt: f64, delta: f64) -> Result<usize> {
    required_samples_with(CALIBRATION_C0, n, w, eps_lt, delta)
}

/// [`required_samples`] with the width-calibrated constant in place of `C0`;
/// the single constant is calibrated on 2-site states and undershoots for
/// wider regions.
pub fn calibrated_samples(n: usize, w: usize, eps_lt: f64, delta: f64) -> Result<u64> {
    if w == 0 || w > REGION_CAP {
        return Err(Error::RegionTooLarge { size: w, cap: REGION_CAP });
    }
    let m = required_samples_with(1.0, n, w, eps_lt, delta)? as f64 * WIDTH_CALIBRATION[w - 1];
    Ok(m.ceil() as u64)
}

pub fn required_samples_with(c0: f64, n: usize, w: usize, eps_lt: f64, delta: f64) -> Result<usize> {
    if n == 0 || w == 0 || !(eps_lt > 0.0) || !(delta > 0.0 && delta < 1.0) || !(c0 > 0.0) {
        return Err(Error::InvalidArgument("required_samples needs positive n, w, ε and δ in (0, 1)".into()));
    }
    let m = c0 * 4f64.powi(w as i32) * (2.0 * n as f64 / delta).ln() / (eps_lt * eps_lt);
    Ok(m.ceil().max(1.0) as usize)
}

pub fn exact_marginal_oracle(state: &DensityMatrix, region: &Region) -> Result<DensityMatrix> {
    state.partial_trace(region)
}

/// Counts of `total` independent draws from `probs`, one conditional
/// binomial per cell.
pub fn multinomial<R: Rng>(total: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let mut out = vec![0u64; probs.len()];
    let mut left = total;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let frac = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let k = if i + 1 == probs.len() || frac >= 1.0 {
            left
        } else {
            Binomial::new(left, frac).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(rng)
        };
        out[i] = k;
        left -= k;
        mass -= p;
    }
    Ok(out)
}

/// Joint Born probabilities of every basis string and outcome; cell
/// `b * 2^n + o` where digit `j` of `b` (base 3) is the basis code of qubit
/// `j` minus one and bit `j` of `o` its outcome.
pub fn pauli_outcome_table(state: &DensityMatrix) -> Vec<f64> {
    let n = state.nqubits();
    let mut out = vec![0.0; 3usize.pow(n as u32) << n];
    let rotations = [Basis::X.rotation(), Basis::Y.rotation(), Basis::Z.rotation()];
    fill_outcomes(state.mat.clone(), 0, n, 0, 0, 1, &rotations, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn fill_outcomes(mat: Mat, j: usize, n: usize, basis: usize, outcome: usize, pow3: usize, rotations: &[Mat; 3], out: &mut [f64]) {
    if j == n {
        out[(basis << n) + outcome] = mat[(0, 0)].re.max(0.0);
        return;
    }
    for (code, v) in rotations.iter().enumerate() {
        let rotated = linalg::kraus_low(std::slice::from_ref(v), &mat);
        let half = mat.nrows() / 2;
        for o in 0..2 {
            let block = Mat::from_fn(half, half, |r, c| rotated[(2 * r + o, 2 * c + o)]);
            fill_outcomes(block, j + 1, n, basis + code * pow3, outcome | o << j, 3 * pow3, rotations, out);
        }
    }
}

/// Shadow data aggregated per median-of-means batch: for each batch the
/// number of shots that saw each basis string and outcome. Estimates from it
/// equal those from the underlying shot records.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowHistogram {
    pub sites: Vec<usize>,
    pub shots: u64,
    /// `counts[k][b * 2^n + o]` for batch `k`.
    pub counts: Vec<Vec<u64>>,
}

impl ShadowHistogram {
    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Aggregates an explicit dataset with the batch split of [`pauli_coefficients`].
    pub fn from_dataset(ds: &ShadowDataset) -> Self {
        let (n, m) = (ds.n(), ds.shots());
        let batches = BATCHES.min(m);
        let mut counts = vec![vec![0u64; 3usize.pow(n as u32) << n]; batches];
        for i in 0..m {
            let (b, o) = ds.record(i);
            let cell = cell_index(b, o);
            counts[i * batches / m][cell] += 1;
        }
        Self { sites: ds.sites.clone(), shots: m as u64, counts }
    }

    fn batch_sizes(&self) -> Vec<u64> {
        let (m, k) = (self.shots, self.counts.len() as u64);
        (0..k).map(|i| ((i + 1) * m).div_ceil(k) - (i * m).div_ceil(k)).collect()
    }

    /// Raw Pauli-coefficient estimates on `region`, as [`pauli_coefficients`].
    pub fn pauli_coefficients(&self, region: &Region) -> Result<Vec<f64>> {
        if self.shots == 0 {
            return Err(Error::EmptyDataset);
        }
        if region.len() > REGION_CAP {
            return Err(Error::RegionTooLarge { size: region.len(), cap: REGION_CAP });
        }
        let n = self.n();
        let pos = region
            .iter()
            .map(|s| self.sites.iter().position(|x| x == s))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::SupportNotContained { support: region.iter().copied().collect(), sites: self.sites.clone() })?;
        let w = pos.len();
        let nb = 3usize.pow(n as u32);
        let pow6: Vec<usize> = (0..w).map(|j| 6usize.pow(j as u32)).collect();
        // local cell index: digit j (base 6) is 2 * basis + outcome on region qubit j
        let basis_offset: Vec<usize> = (0..nb)
            .map(|b| pos.iter().enumerate().map(|(j, &p)| 2 * (b / 3usize.pow(p as u32) % 3) * pow6[j]).sum())
            .collect();
        let outcome_offset: Vec<usize> =
            (0..1usize << n).map(|o| pos.iter().enumerate().map(|(j, &p)| (o >> p & 1) * pow6[j]).sum()).collect();
        let sizes = self.batch_sizes();
        let mut means = vec![vec![0.0; self.counts.len()]; 1 << (2 * w)];
        for (k, batch) in self.counts.iter().enumerate() {
            let mut local = vec![0.0f64; 6usize.pow(w as u32)];
            for b in 0..nb {
                let row = &batch[b << n..(b + 1) << n];
                for (o, &c) in row.iter().enumerate() {
                    local[basis_offset[b] + outcome_offset[o]] += c as f64;
                }
            }
            let coeffs = snapshot_transform(local, w);
            for (p, x) in coeffs.into_iter().enumerate() {
                means[p][k] = x / sizes[k] as f64;
            }
        }
        Ok(means.into_iter().map(|mut v| median(&mut v)).collect())
    }

    pub fn estimate_marginal(&self, region: &Region) -> Result<DensityMatrix> {
        let coeffs = self.pauli_coefficients(region)?;
        let est = if region.is_empty() {
            Mat::from_element(1, 1, ONE)
        } else {
            project_density(&operator_from_pauli(&coeffs, region.len()))
        };
        DensityMatrix::raw(region.iter().copied().collect(), est)
    }
}

/// Maps per-qubit (basis, outcome) counts to summed snapshot Pauli
/// coefficients, one qubit at a time: `I` gets 1, the measured Pauli `±3`.
fn snapshot_transform(mut data: Vec<f64>, w: usize) -> Vec<f64> {
    for j in 0..w {
        let inner = 4usize.pow(j as u32);
        let outer = data.len() / (6 * inner);
        let mut next = vec![0.0; outer * 4 * inner];
        for hi in 0..outer {
            for lo in 0..inner {
                let at = |d: usize| data[hi * 6 * inner + d * inner + lo];
                let put = |t: usize| hi * 4 * inner + t * inner + lo;
                let mut id = 0.0;
                for basis in 0..3 {
                    let (plus, minus) = (at(2 * basis), at(2 * basis + 1));
                    id += plus + minus;
                    next[put(basis + 1)] = 3.0 * (plus - minus);
                }
                next[put(0)] = id;
            }
        }
        data = next;
    }
    data
}

fn cell_index(bases: &[Basis], bits: &[u8]) -> usize {
    let n = bases.len();
    let b: usize = bases.iter().rev().fold(0, |acc, &x| acc * 3 + (x as usize - 1));
    let o: usize = bits.iter().enumerate().map(|(j, &x)| (x as usize) << j).sum();
    (b << n) + o
}

/// Draws the batch histograms of `m` shadow shots on `state` directly,
/// without simulating individual shots.
pub fn collect_shadow_histogram(state: &DensityMatrix, m: u64, seed: u64) -> Result<ShadowHistogram> {
    if m == 0 {
        return Err(Error::InvalidArgument("shot count must be at least 1".into()));
    }
    let n = state.nqubits();
    let table = pauli_outcome_table(state);
    let nb = 3usize.pow(n as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches = (BATCHES as u64).min(m);
    let uniform = vec![1.0; nb];
    let mut counts = Vec::with_capacity(batches as usize);
    for k in 0..batches {
        let size = ((k + 1) * m).div_ceil(batches) - (k * m).div_ceil(batches);
        let per_basis = multinomial(size, &uniform, &mut rng)?;
        let mut batch = vec![0u64; nb << n];
        for (b, &shots) in per_basis.iter().enumerate() {
            if shots > 0 {
                let row = multinomial(shots, &table[b << n..(b + 1) << n], &mut rng)?;
                batch[b << n..(b + 1) << n].copy_from_slice(&row);
            }
        }
        counts.push(batch);
    }
    Ok(ShadowHistogram { sites: state.sites.clone(), shots: m, counts })
}

/// Where the pipeline gets its local marginals.
#[derive(Clone, Debug)]
pub enum MarginalSource {
    Exact(DensityMatrix),
    Shadows { dataset: ShadowDataset, eps_lt: f64 },
    Histogram(ShadowHistogram),
}

impl MarginalSource {
    pub fn marginal(&self, region: &Region) -> Result<DensityMatrix> {
        match self {
            MarginalSource::Exact(state) => exact_marginal_oracle(state, region),
            MarginalSource::Shadows { dataset, eps_lt } => Ok(estimate_marginal(dataset, region, *eps_lt)?.estimate),
            MarginalSource::Histogram(h) => h.estimate_marginal(region),
        }
    }

    pub fn sites(&self) -> Vec<usize> {
        match self {
            MarginalSource::Exact(state) => state.sites.clone(),
            MarginalSource::Shadows { dataset, .. } => dataset.sites.clone(),
            MarginalSource::Histogram(h) => h.sites.clone(),
        }
    }

    pub fn shots(&self) -> usize {
        match self {
            MarginalSource::Exact(_) => 0,
            MarginalSource::Shadows { dataset, .. } => dataset.shots(),
            MarginalSource::Histogram(h) => h.shots as usize,
        }
    }
}
