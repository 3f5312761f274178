//! Classical limit: distributions over lattice sites, local stochastic
//! transition gates, conditional-probability recovery and extension maps,
//! and a learner that assembles a `(k + 1)`-layer noisy-channel circuit.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelGate;
use crate::choi::ChoiMatrix;
use crate::covering::{CoveringPlan, MapKind, Step};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, Region};
use crate::linalg::{Mat, C64};
use crate::pipeline::{buffer_region, check_plan, run_plan, ErrorBudget, LearnReport, Learner, StepRecord};
use crate::shadows::multinomial;
use crate::state::DensityMatrix;

/// Largest table (entries) a distribution or gate may hold.
pub const TABLE_CAP: usize = 1 << 22;
/// Largest alphabet; assignments are written one digit per site.
pub const ALPHABET_CAP: usize = 10;

const SUM_TOL: f64 = 1e-12;

fn table_size(q: usize, sites: usize) -> Result<usize> {
    let mut size = 1usize;
    for _ in 0..sites {
        size = size.checked_mul(q).filter(|&s| s <= TABLE_CAP).ok_or_else(|| Error::DimensionCap {
            qubits: sites,
            cap: (TABLE_CAP as f64).log(q as f64).floor() as usize,
        })?;
    }
    Ok(size)
}

fn check_alphabet(q: usize) -> Result<()> {
    if !(2..=ALPHABET_CAP).contains(&q) {
        return Err(Error::InvalidArgument(format!("alphabet size {q} outside 2..={ALPHABET_CAP}")));
    }
    Ok(())
}

fn check_sorted(sites: &[usize]) -> Result<()> {
    if !sites.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::LabelMismatch(format!("sites {sites:?} must be strictly ascending")));
    }
    Ok(())
}

/// Digit of `index` at position `j` in base `q`, little-endian.
fn digits(mut index: usize, q: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(index % q);
        index /= q;
    }
    out
}

fn assignment_string(index: usize, q: usize, len: usize) -> String {
    digits(index, q, len).iter().map(|&d| char::from(b'0' + d as u8)).collect()
}

fn parse_assignment(text: &str, q: usize, len: usize) -> Result<usize> {
    if text.len() != len {
        return Err(Error::Format(format!("assignment {text:?} should have {len} digits")));
    }
    let mut index = 0;
    for ch in text.chars().rev() {
        let d = ch.to_digit(10).filter(|&d| (d as usize) < q).ok_or_else(|| Error::Format(format!("bad digit in {text:?}")))?;
        index = index * q + d as usize;
    }
    Ok(index)
}

/// For each index over `from`, the matching index contribution in a register
/// ordered as `to` (sites of `from` missing from `to` contribute nothing).
fn stride_map(from: &[usize], to: &[usize], q: usize) -> Vec<usize> {
    let strides: Vec<Option<usize>> =
        from.iter().map(|s| to.iter().position(|t| t == s).map(|p| q.pow(p as u32))).collect();
    let size = q.pow(from.len() as u32);
    (0..size)
        .map(|i| digits(i, q, from.len()).iter().zip(&strides).map(|(&d, st)| st.map_or(0, |st| d * st)).sum())
        .collect()
}

/// `sites` with entries outside `keep` blanked, so [`stride_map`] skips them.
fn rest_in(sites: &[usize], keep: &[usize]) -> Vec<usize> {
    sites.iter().map(|s| if keep.contains(s) { *s } else { usize::MAX }).collect()
}

/// A distribution over `q^n` assignments of `sites`; digit `j` of an index is
/// the value at `sites[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalDistribution {
    pub sites: Vec<usize>,
    pub q: usize,
    pub probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionFile {
    sites: Vec<usize>,
    q: usize,
    table: Vec<(String, f64)>,
}

impl ClassicalDistribution {
    pub fn new(sites: Vec<usize>, q: usize, probs: Vec<f64>) -> Result<Self> {
        check_alphabet(q)?;
        check_sorted(&sites)?;
        let size = table_size(q, sites.len())?;
        if probs.len() != size {
            return Err(Error::DimensionMismatch { expected: size, actual: probs.len() });
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument("probabilities must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL * size.max(1) as f64 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { sites, q, probs })
    }

    pub fn point_mass(sites: Vec<usize>, q: usize, values: &[usize]) -> Result<Self> {
        check_alphabet(q)?;
        let size = table_size(q, sites.len())?;
        if values.len() != sites.len() || values.iter().any(|&v| v >= q) {
            return Err(Error::InvalidArgument(format!("assignment {values:?} does not fit {} sites", sites.len())));
        }
        let index = values.iter().rev().fold(0, |acc, &v| acc * q + v);
        let mut probs = vec![0.0; size];
        probs[index] = 1.0;
        Self::new(sites, q, probs)
    }

    /// All sites at value 0.
    pub fn zeros(sites: Vec<usize>, q: usize) -> Result<Self> {
        let n = sites.len();
        Self::point_mass(sites, q, &vec![0; n])
    }

    pub fn uniform(sites: Vec<usize>, q: usize) -> Result<Self> {
        check_alphabet(q)?;
        let size = table_size(q, sites.len())?;
        Self::new(sites, q, vec![1.0 / size as f64; size])
    }

    pub fn random(sites: Vec<usize>, q: usize, rng: &mut impl Rng) -> Result<Self> {
        check_alphabet(q)?;
        let size = table_size(q, sites.len())?;
        let raw: Vec<f64> = (0..size).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        Self::new(sites, q, raw.into_iter().map(|v| v / total).collect())
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn region(&self) -> Region {
        self.sites.iter().copied().collect()
    }

    pub fn value_at(&self, index: usize, site: usize) -> Option<usize> {
        let p = self.sites.iter().position(|&s| s == site)?;
        Some(index / self.q.pow(p as u32) % self.q)
    }

    pub fn marginal(&self, keep: &Region) -> Result<Self> {
        if let Some(&s) = keep.iter().find(|s| !self.sites.contains(s)) {
            return Err(Error::SupportNotContained { support: vec![s], sites: self.sites.clone() });
        }
        let kept: Vec<usize> = keep.iter().copied().collect();
        let map = stride_map(&self.sites, &kept, self.q);
        let mut probs = vec![0.0; table_size(self.q, kept.len())?];
        for (i, &p) in self.probs.iter().enumerate() {
            probs[map[i]] += p;
        }
        Ok(Self { sites: kept, q: self.q, probs })
    }

    /// Independent joint distribution on disjoint site sets.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.q != other.q {
            return Err(Error::InvalidArgument("alphabets differ".into()));
        }
        if self.sites.iter().any(|s| other.sites.contains(s)) {
            return Err(Error::LabelMismatch("tensor factors share sites".into()));
        }
        let mut sites: Vec<usize> = self.sites.iter().chain(&other.sites).copied().collect();
        sites.sort_unstable();
        let size = table_size(self.q, sites.len())?;
        let left = stride_map(&self.sites, &sites, self.q);
        let right = stride_map(&other.sites, &sites, self.q);
        let mut probs = vec![0.0; size];
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, &r) in other.probs.iter().enumerate() {
                probs[left[i] + right[j]] += p * r;
            }
        }
        Ok(Self { sites, q: self.q, probs })
    }

    /// Extends the register with `extra` sites held at value 0.
    pub fn with_zeros(&self, extra: &Region) -> Result<Self> {
        let new: Vec<usize> = extra.iter().copied().filter(|s| !self.sites.contains(s)).collect();
        if new.is_empty() {
            return Ok(self.clone());
        }
        self.tensor(&Self::zeros(new, self.q)?)
    }

    fn same_register(&self, other: &Self) -> Result<()> {
        if self.sites != other.sites || self.q != other.q {
            return Err(Error::LabelMismatch(format!("registers {:?} and {:?} differ", self.sites, other.sites)));
        }
        Ok(())
    }

    /// `|P - Q|_1`.
    pub fn l1(&self, other: &Self) -> Result<f64> {
        self.same_register(other)?;
        Ok(self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Total variation distance `|P - Q|_1 / 2`.
    pub fn tv(&self, other: &Self) -> Result<f64> {
        Ok(0.5 * self.l1(other)?)
    }

    /// One sample as site values in site order.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<u8> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.probs.len() - 1;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        digits(pick, self.q, self.n()).into_iter().map(|d| d as u8).collect()
    }

    pub fn samples(&self, m: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut cumulative = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for &p in &self.probs {
            acc += p;
            cumulative.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let i = cumulative.partition_point(|&c| c <= u).min(self.probs.len() - 1);
                digits(i, self.q, self.n()).into_iter().map(|d| d as u8).collect()
            })
            .collect()
    }

    /// Histogram of `m` independent samples, drawn as one multinomial.
    pub fn sample_counts(&self, m: u64, seed: u64) -> Result<EmpiricalCounts> {
        if m == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = multinomial(m, &self.probs, &mut rng)?
            .into_iter()
            .enumerate()
            .filter(|&(_, k)| k > 0)
            .map(|(i, k)| (i as u64, k))
            .collect();
        Ok(EmpiricalCounts { sites: self.sites.clone(), q: self.q, total: m, counts })
    }

    /// Sparse JSON table of `(assignment, probability)`.
    pub fn to_json(&self) -> Result<String> {
        let table = self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(i, &p)| (assignment_string(i, self.q, self.n()), p))
            .collect();
        Ok(serde_json::to_string_pretty(&DistributionFile { sites: self.sites.clone(), q: self.q, table })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DistributionFile = serde_json::from_str(text)?;
        check_alphabet(f.q)?;
        let mut probs = vec![0.0; table_size(f.q, f.sites.len())?];
        for (a, p) in &f.table {
            probs[parse_assignment(a, f.q, f.sites.len())?] += p;
        }
        Self::new(f.sites, f.q, probs)
    }
}

/// Sample histogram keyed by assignment index over `sites`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCounts {
    pub sites: Vec<usize>,
    pub q: usize,
    pub total: u64,
    pub counts: BTreeMap<u64, u64>,
}

impl EmpiricalCounts {
    pub fn from_samples(sites: Vec<usize>, q: usize, samples: &[Vec<u8>]) -> Result<Self> {
        check_alphabet(q)?;
        check_sorted(&sites)?;
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if (q as f64).powi(sites.len() as i32) > u64::MAX as f64 {
            return Err(Error::InvalidArgument("assignments do not fit a 64-bit index".into()));
        }
        let mut counts = BTreeMap::new();
        for s in samples {
            if s.len() != sites.len() || s.iter().any(|&v| v as usize >= q) {
                return Err(Error::Format(format!("sample {s:?} does not fit {} sites over {q} values", sites.len())));
            }
            let index = s.iter().rev().fold(0u64, |acc, &v| acc * q as u64 + v as u64);
            *counts.entry(index).or_insert(0) += 1;
        }
        Ok(Self { sites, q, total: samples.len() as u64, counts })
    }

    /// Empirical frequencies on `region`.
    pub fn marginal(&self, region: &Region) -> Result<ClassicalDistribution> {
        if let Some(&s) = region.iter().find(|s| !self.sites.contains(s)) {
            return Err(Error::SupportNotContained { support: vec![s], sites: self.sites.clone() });
        }
        let kept: Vec<usize> = region.iter().copied().collect();
        let size = table_size(self.q, kept.len())?;
        let strides: Vec<(u64, usize)> = kept
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let p = self.sites.iter().position(|t| t == s).expect("checked above");
                ((self.q as u64).pow(p as u32), self.q.pow(j as u32))
            })
            .collect();
        let mut probs = vec![0.0; size];
        for (&index, &c) in &self.counts {
            let i: usize = strides.iter().map(|&(from, to)| (index / from % self.q as u64) as usize * to).sum();
            probs[i] += c as f64;
        }
        for p in &mut probs {
            *p /= self.total as f64;
        }
        Ok(ClassicalDistribution { sites: kept, q: self.q, probs })
    }
}

/// Empirical marginal tables of `samples` on each region.
pub fn estimate_marginals_from_samples(
    sites: Vec<usize>,
    q: usize,
    samples: &[Vec<u8>],
    regions: &[Region],
) -> Result<Vec<ClassicalDistribution>> {
    let counts = EmpiricalCounts::from_samples(sites, q, samples)?;
    regions.iter().map(|r| counts.marginal(r)).collect()
}

/// Samples that put every one of `regions` empirical tables (at most `width`
/// sites each) within `l1` of the truth with probability at least `1 - δ`,
/// from `P(|P̂ - P|_1 ≥ t) ≤ 2^K exp(-M t² / 2)` and a union bound.
pub fn required_samples_classical(q: usize, width: usize, regions: usize, l1: f64, delta: f64) -> Result<u64> {
    if !(l1 > 0.0) || !(delta > 0.0 && delta < 1.0) || regions == 0 {
        return Err(Error::InvalidArgument("needs l1 > 0, δ in (0, 1) and at least one region".into()));
    }
    let k = (q as f64).powi(width as i32);
    let m = 2.0 * (k * std::f64::consts::LN_2 + (regions as f64 / delta).ln()) / (l1 * l1);
    Ok(m.ceil().max(1.0) as u64)
}

/// Newline-delimited samples, one digit per site.
pub fn write_samples(samples: &[Vec<u8>]) -> String {
    let mut out = String::new();
    for s in samples {
        out.extend(s.iter().map(|&v| char::from(b'0' + v)));
        out.push('\n');
    }
    out
}

pub fn read_samples(text: &str) -> Result<Vec<Vec<u8>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::Format(format!("bad sample line {l:?}"))))
                .collect()
        })
        .collect()
}

/// A local stochastic map `input -> output`; `t[(y, x)]` is the probability of
/// output `y` given input `x`, so columns sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionGate {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub q: usize,
    pub t: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GateFile {
    input: Vec<usize>,
    output: Vec<usize>,
    q: usize,
    /// `(output assignment, input assignment, probability)`.
    table: Vec<(String, String, f64)>,
}

impl TransitionGate {
    pub fn new(input: Vec<usize>, output: Vec<usize>, q: usize, t: DMatrix<f64>) -> Result<Self> {
        check_alphabet(q)?;
        check_sorted(&input)?;
        check_sorted(&output)?;
        let (din, dout) = (table_size(q, input.len())?, table_size(q, output.len())?);
        if t.nrows() != dout || t.ncols() != din {
            return Err(Error::DimensionMismatch { expected: dout * din, actual: t.nrows() * t.ncols() });
        }
        if t.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("transition probabilities must be non-negative".into()));
        }
        let worst = (0..din).map(|j| (t.column(j).sum() - 1.0).abs()).fold(0.0, f64::max);
        if worst > SUM_TOL * dout as f64 {
            return Err(Error::InvalidArgument(format!("columns sum to one only within {worst:e}")));
        }
        Ok(Self { input, output, q, t })
    }

    pub fn identity(sites: Vec<usize>, q: usize) -> Result<Self> {
        let d = table_size(q, sites.len())?;
        Self::new(sites.clone(), sites, q, DMatrix::identity(d, d))
    }

    /// Ignores the input and outputs `p`.
    pub fn replacement(input: Vec<usize>, p: &ClassicalDistribution) -> Result<Self> {
        let din = table_size(p.q, input.len())?;
        let t = DMatrix::from_fn(p.probs.len(), din, |y, _| p.probs[y]);
        Self::new(input, p.sites.clone(), p.q, t)
    }

    pub fn random(sites: Vec<usize>, q: usize, rng: &mut impl Rng) -> Result<Self> {
        let d = table_size(q, sites.len())?;
        let mut t = DMatrix::from_fn(d, d, |_, _| -rng.random::<f64>().max(1e-300).ln());
        for mut col in t.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        Self::new(sites.clone(), sites, q, t)
    }

    /// Largest deviation of a column sum from one.
    pub fn stochastic_residual(&self) -> f64 {
        (0..self.t.ncols()).map(|j| (self.t.column(j).sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Applies the map. Inputs that are not outputs are marginalized; outputs
    /// absent from the register are added to it, and outputs already present
    /// are overwritten.
    pub fn apply(&self, p: &ClassicalDistribution) -> Result<ClassicalDistribution> {
        if p.q != self.q {
            return Err(Error::InvalidArgument("alphabets differ".into()));
        }
        if let Some(&s) = self.input.iter().find(|s| !p.sites.contains(s)) {
            return Err(Error::SupportNotContained { support: vec![s], sites: p.sites.clone() });
        }
        let rest: Vec<usize> =
            p.sites.iter().copied().filter(|s| !self.input.contains(s) && !self.output.contains(s)).collect();
        let mut sites: Vec<usize> = rest.iter().chain(&self.output).copied().collect();
        sites.sort_unstable();
        let size = table_size(p.q, sites.len())?;
        let in_map = stride_map(&p.sites, &self.input, p.q);
        let rest_map = stride_map(&p.sites, &rest_in(&sites, &rest), p.q);
        let out_map = stride_map(&self.output, &sites, p.q);
        let mut probs = vec![0.0; size];
        for (x, &px) in p.probs.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let col = self.t.column(in_map[x]);
            let base = rest_map[x];
            for (y, &ty) in col.iter().enumerate() {
                if ty != 0.0 {
                    probs[base + out_map[y]] += px * ty;
                }
            }
        }
        Ok(ClassicalDistribution { sites, q: p.q, probs })
    }

    /// Applies the map in place on `p`'s register; inputs that are not
    /// outputs are reset to 0.
    pub fn apply_placed(&self, p: &ClassicalDistribution) -> Result<ClassicalDistribution> {
        if let Some(&s) = self.output.iter().find(|s| !p.sites.contains(s)) {
            return Err(Error::SupportNotContained { support: vec![s], sites: p.sites.clone() });
        }
        let gone: Region = self.input.iter().copied().filter(|s| !self.output.contains(s)).collect();
        self.apply(p)?.with_zeros(&gone)
    }

    fn to_file(&self) -> GateFile {
        let (ni, no) = (self.input.len(), self.output.len());
        let mut table = Vec::new();
        for x in 0..self.t.ncols() {
            for y in 0..self.t.nrows() {
                let v = self.t[(y, x)];
                if v != 0.0 {
                    table.push((assignment_string(y, self.q, no), assignment_string(x, self.q, ni), v));
                }
            }
        }
        GateFile { input: self.input.clone(), output: self.output.clone(), q: self.q, table }
    }

    fn from_file(f: GateFile) -> Result<Self> {
        check_alphabet(f.q)?;
        let (din, dout) = (table_size(f.q, f.input.len())?, table_size(f.q, f.output.len())?);
        let mut t = DMatrix::zeros(dout, din);
        for (y, x, v) in &f.table {
            t[(parse_assignment(y, f.q, f.output.len())?, parse_assignment(x, f.q, f.input.len())?)] += v;
        }
        Self::new(f.input, f.output, f.q, t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

fn require_qubits(q: usize) -> Result<()> {
    if q != 2 {
        return Err(Error::InvalidArgument(format!("quantum embedding needs a binary alphabet, got {q}")));
    }
    Ok(())
}

/// `diag(P)` as a density matrix.
pub fn embed_diag(p: &ClassicalDistribution) -> Result<DensityMatrix> {
    require_qubits(p.q)?;
    let d = p.probs.len();
    let mat = Mat::from_fn(d, d, |i, j| if i == j { C64::new(p.probs[i], 0.0) } else { C64::new(0.0, 0.0) });
    DensityMatrix::new(p.sites.clone(), mat)
}

/// Kraus operators `sqrt(t[(i, j)]) |i><j|` over the gate's input and output.
pub fn embed_kraus(g: &TransitionGate) -> Result<Vec<Mat>> {
    require_qubits(g.q)?;
    let (dout, din) = g.t.shape();
    let mut kraus = Vec::new();
    for j in 0..din {
        for i in 0..dout {
            let v = g.t[(i, j)];
            if v > 0.0 {
                let mut k = Mat::zeros(dout, din);
                k[(i, j)] = C64::new(v.sqrt(), 0.0);
                kraus.push(k);
            }
        }
    }
    Ok(kraus)
}

/// The quantum channel realizing an in-place transition gate.
pub fn embed_channel(g: &TransitionGate) -> Result<ChannelGate> {
    if g.input != g.output {
        return Err(Error::InvalidArgument("embed_channel needs input == output; use embed_choi".into()));
    }
    ChannelGate::new(g.input.clone(), embed_kraus(g)?)
}

/// The quantum channel realizing any transition gate, as a Choi matrix.
pub fn embed_choi(g: &TransitionGate) -> Result<ChoiMatrix> {
    ChoiMatrix::from_kraus(g.input.clone(), g.output.clone(), &embed_kraus(g)?)
}

/// Diagonal of a density matrix as a distribution; errors on off-diagonal
/// weight above `tol`.
pub fn diagonal_of(rho: &DensityMatrix, tol: f64) -> Result<ClassicalDistribution> {
    let d = rho.dim();
    let off = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|ij| rho.mat[ij].norm()).fold(0.0, f64::max);
    if off > tol {
        return Err(Error::InvalidArgument(format!("state is not diagonal (off-diagonal {off:e})")));
    }
    let probs: Vec<f64> = (0..d).map(|i| rho.mat[(i, i)].re.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    ClassicalDistribution::new(rho.sites.clone(), 2, probs.into_iter().map(|p| p / total).collect())
}

fn sorted_union(a: &Region, b: &Region) -> Vec<usize> {
    a.union(b).copied().collect()
}

/// Conditional-probability map `B -> BC`: keeps `b` and draws `c` from
/// `P(c | b)`, uniform where `P(b) = 0`.
pub fn classical_recovery(p: &ClassicalDistribution, b: &Region, c: &Region) -> Result<TransitionGate> {
    classical_extension(p, b, c, &Region::new())
}

/// Discards `E`, then applies [`classical_recovery`]: a map `BE -> BC`.
pub fn classical_extension(p: &ClassicalDistribution, b: &Region, c: &Region, e: &Region) -> Result<TransitionGate> {
    if !b.is_disjoint(c) || !b.is_disjoint(e) || !c.is_disjoint(e) {
        return Err(Error::InvalidArgument("B, C and E must be disjoint".into()));
    }
    let q = p.q;
    let bc_sites = sorted_union(b, c);
    let p_bc = p.marginal(&bc_sites.iter().copied().collect())?;
    let b_sites: Vec<usize> = b.iter().copied().collect();
    let input = sorted_union(b, e);
    let (din, dout) = (table_size(q, input.len())?, table_size(q, bc_sites.len())?);
    let dc = table_size(q, c.len())?;

    // P(b) and, for each output assignment, its B index
    let b_of_out = stride_map(&bc_sites, &b_sites, q);
    let mut p_b = vec![0.0; table_size(q, b_sites.len())?];
    for (y, &v) in p_bc.probs.iter().enumerate() {
        p_b[b_of_out[y]] += v;
    }
    let b_of_in = stride_map(&input, &b_sites, q);
    let mut t = DMatrix::zeros(dout, din);
    for x in 0..din {
        let bx = b_of_in[x];
        for y in 0..dout {
            if b_of_out[y] != bx {
                continue;
            }
            t[(y, x)] = if p_b[bx] > 0.0 { p_bc.probs[y] / p_b[bx] } else { 1.0 / dc as f64 };
        }
    }
    // renormalize columns against rounding in the conditional
    for mut col in t.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    TransitionGate::new(input, bc_sites, q, t)
}

/// `|P_target - gate(P_input)|_1` with the input's non-outputs marginalized.
pub fn map_error(gate: &TransitionGate, input: &ClassicalDistribution, target: &ClassicalDistribution) -> Result<f64> {
    gate.apply(input)?.l1(target)
}

/// Where the classical learner reads its marginals.
#[derive(Clone, Debug)]
pub enum ClassicalSource {
    Exact(ClassicalDistribution),
    Counts(EmpiricalCounts),
}

impl ClassicalSource {
    pub fn marginal(&self, region: &Region) -> Result<ClassicalDistribution> {
        match self {
            ClassicalSource::Exact(p) => p.marginal(region),
            ClassicalSource::Counts(c) => c.marginal(region),
        }
    }

    pub fn q(&self) -> usize {
        match self {
            ClassicalSource::Exact(p) => p.q,
            ClassicalSource::Counts(c) => c.q,
        }
    }

    pub fn sites(&self) -> &[usize] {
        match self {
            ClassicalSource::Exact(p) => &p.sites,
            ClassicalSource::Counts(c) => &c.sites,
        }
    }

    pub fn shots(&self) -> usize {
        match self {
            ClassicalSource::Exact(_) => 0,
            ClassicalSource::Counts(c) => c.total as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedTransition {
    pub step: usize,
    pub layer: usize,
    pub kind: MapKind,
    pub gate: TransitionGate,
}

/// A `(k + 1)`-layer noisy-channel circuit acting on the all-zero assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalCircuit {
    pub lattice: Lattice,
    pub q: usize,
    pub layers: Vec<Vec<PlacedTransition>>,
}

impl ClassicalCircuit {
    pub fn map_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn maps(&self) -> impl Iterator<Item = &PlacedTransition> {
        self.layers.iter().flatten()
    }

    pub fn to_json(&self) -> Result<String> {
        let maps = self
            .maps()
            .map(|m| PlacedFile { step: m.step, layer: m.layer, kind: m.kind, gate: m.gate.to_file() })
            .collect();
        let f = CircuitFile { lattice: self.lattice.clone(), q: self.q, maps };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CircuitFile = serde_json::from_str(text)?;
        let mut layers: Vec<Vec<PlacedTransition>> = Vec::new();
        for m in f.maps {
            if m.layer == 0 {
                return Err(Error::Format("layers are numbered from 1".into()));
            }
            if layers.len() < m.layer {
                layers.resize_with(m.layer, Vec::new);
            }
            let gate = TransitionGate::from_file(m.gate)?;
            layers[m.layer - 1].push(PlacedTransition { step: m.step, layer: m.layer, kind: m.kind, gate });
        }
        Ok(Self { lattice: f.lattice, q: f.q, layers })
    }
}

#[derive(Serialize, Deserialize)]
struct PlacedFile {
    step: usize,
    layer: usize,
    kind: MapKind,
    gate: GateFile,
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    lattice: Lattice,
    q: usize,
    maps: Vec<PlacedFile>,
}

/// `W(Q)` with `Q` the point mass on the all-zero assignment.
pub fn generate_classical(w: &ClassicalCircuit) -> Result<ClassicalDistribution> {
    let mut p = ClassicalDistribution::zeros(w.lattice.all().into_iter().collect(), w.q)?;
    for m in w.maps() {
        p = m.gate.apply_placed(&p)?;
    }
    Ok(p)
}

fn learn_classical_step(
    source: &ClassicalSource,
    lattice: &Lattice,
    s: usize,
    budget: &ErrorBudget,
    step: &Step,
) -> (StepRecord, Option<PlacedTransition>) {
    let start = Instant::now();
    let parts = &step.parts;
    let a_in = buffer_region(lattice, s, step);
    let record = StepRecord {
        step: step.index,
        layer: step.layer,
        kind: step.kind,
        patch: a_in.union(&parts.bcde()).copied().collect(),
        achieved: None,
        threshold: budget.threshold,
        pass: false,
        fidelity: None,
        certificate: None,
        note: String::new(),
        seconds: 0.0,
    };
    let outcome = (|| -> Result<(f64, TransitionGate)> {
        match step.kind {
            MapKind::Initialize => {
                let joint = source.marginal(&a_in.union(&parts.c).copied().collect())?;
                let p_c = joint.marginal(&parts.c)?;
                let defect = if a_in.is_empty() { 0.0 } else { joint.marginal(&a_in)?.tensor(&p_c)?.l1(&joint)? };
                let input: Vec<usize> = parts.c.iter().copied().collect();
                Ok((defect, TransitionGate::replacement(input, &p_c)?))
            }
            MapKind::Extend | MapKind::Recover => {
                let ab: Region = a_in.union(&parts.b).copied().collect();
                let target = source.marginal(&ab.union(&parts.c).copied().collect())?;
                let input = source.marginal(&ab.union(&parts.e).copied().collect())?;
                let gate = classical_extension(&target, &parts.b, &parts.c, &parts.e)?;
                Ok((map_error(&gate, &input, &target)?, gate))
            }
        }
    })();
    let (mut rec, map) = match outcome {
        Ok((achieved, gate)) => {
            let pass = achieved <= budget.threshold;
            let rec = StepRecord { achieved: Some(achieved), pass, ..record };
            let placed = PlacedTransition { step: step.index, layer: step.layer, kind: step.kind, gate };
            (rec, pass.then_some(placed))
        }
        Err(e) => (StepRecord { note: e.to_string(), ..record }, None),
    };
    rec.seconds = start.elapsed().as_secs_f64();
    (rec, map)
}

/// Learns a noisy-channel circuit generating the source distribution over
/// `plan`. Steps are accepted when the `L1` distance on their marginals is at
/// most `budget.threshold`; the first miss ends the run with `Flag::Fail`.
pub fn learn_classical(
    source: &ClassicalSource,
    lattice: &Lattice,
    budget: &ErrorBudget,
    plan: &CoveringPlan,
) -> Result<(ClassicalCircuit, LearnReport)> {
    check_plan(plan, lattice)?;
    let all: Vec<usize> = lattice.all().into_iter().collect();
    if source.sites() != all.as_slice() {
        return Err(Error::LabelMismatch("source sites do not match the lattice".into()));
    }
    let start = Instant::now();
    let (layers, steps, flag) = run_plan(plan, |st| learn_classical_step(source, lattice, plan.s, budget, st));
    let circuit = ClassicalCircuit { lattice: lattice.clone(), q: source.q(), layers };
    let report = LearnReport {
        flag,
        steps,
        s: plan.s,
        patch: plan.patch,
        learner: Learner::Conditional,
        shots: source.shots(),
        total_distance: None,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((circuit, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalVerification {
    /// `|W(Q) - P|_1 / 2`.
    pub tv: f64,
    /// `min(ε, K · 8ε_LI / 2)`.
    pub bound: f64,
    pub pass: bool,
}

pub fn verify_classical(w: &ClassicalCircuit, p: &ClassicalDistribution, budget: &ErrorBudget) -> Result<ClassicalVerification> {
    let tv = generate_classical(w)?.tv(p)?;
    let bound = budget.epsilon.min(0.5 * w.map_count() as f64 * budget.threshold);
    Ok(ClassicalVerification { tv, bound, pass: tv <= bound })
}

/// A Markov chain along sites `0..n`. `kernels[i][(y, x)]` is the probability
/// of value `y` at site `i + 1` given `x` at site `i`.
pub fn markov_chain(initial: &[f64], kernels: &[DMatrix<f64>]) -> Result<ClassicalDistribution> {
    let q = initial.len();
    let n = kernels.len() + 1;
    let mut p = ClassicalDistribution::new(vec![0], q, initial.to_vec())?;
    for (i, k) in kernels.iter().enumerate() {
        let g = TransitionGate::new(vec![i], vec![i, i + 1], q, DMatrix::from_fn(q * q, q, |y, x| {
            // output index y = x_i + q * x_{i+1}
            if y % q == x {
                k[(y / q, x)]
            } else {
                0.0
            }
        }))?;
        p = g.apply(&p)?;
    }
    debug_assert_eq!(p.n(), n);
    Ok(p)
}

/// Random chain with kernels bounded away from 0 and 1. With `segment > 0`
/// the kernel entering every site that is a multiple of `segment` ignores its
/// input, so sites in different segments are independent.
pub fn random_markov_chain(n: usize, q: usize, segment: usize, seed: u64) -> Result<ClassicalDistribution> {
    check_alphabet(q)?;
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one site".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let column = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..q).map(|_| 0.1 + rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let initial = column(&mut rng);
    let mut kernels = Vec::with_capacity(n - 1);
    for i in 1..n {
        let cols: Vec<Vec<f64>> = if segment > 0 && i % segment == 0 {
            let c = column(&mut rng);
            vec![c; q]
        } else {
            (0..q).map(|_| column(&mut rng)).collect()
        };
        kernels.push(DMatrix::from_fn(q, q, |y, x| cols[x][y]));
    }
    markov_chain(&initial, &kernels)
}

/// Nearest-neighbor Ising chain `P(x) ∝ exp(β Σ z_i z_{i+1} + h Σ z_i)`, `z = 1 - 2x`.
pub fn ising_chain(n: usize, beta: f64, h: f64) -> Result<ClassicalDistribution> {
    let size = table_size(2, n)?;
    let weights: Vec<f64> = (0..size)
        .map(|i| {
            let z: Vec<f64> = (0..n).map(|j| 1.0 - 2.0 * ((i >> j) & 1) as f64).collect();
            let bonds: f64 = z.windows(2).map(|w| w[0] * w[1]).sum();
            (beta * bonds + h * z.iter().sum::<f64>()).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    ClassicalDistribution::new((0..n).collect(), 2, weights.into_iter().map(|w| w / total).collect())
}

/// Random independent sites except for `pair`, whose two values are equal
/// and uniformly random.
pub fn correlated_pair_distribution(lattice: &Lattice, pair: (usize, usize), q: usize, seed: u64) -> Result<ClassicalDistribution> {
    let (x, y) = pair;
    if x == y || x >= lattice.n || y >= lattice.n {
        return Err(Error::InvalidArgument(format!("bad pair {pair:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (x.min(y), x.max(y));
    let probs: Vec<f64> = (0..q * q).map(|i| if i % q == i / q { 1.0 / q as f64 } else { 0.0 }).collect();
    let mut p = ClassicalDistribution::new(vec![lo, hi], q, probs)?;
    for site in 0..lattice.n {
        if site != x && site != y {
            p = p.tensor(&ClassicalDistribution::random(vec![site], q, &mut rng)?)?;
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region;

    #[test]
    fn marginal_and_tensor_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ClassicalDistribution::random(vec![0, 2], 3, &mut rng).unwrap();
        let b = ClassicalDistribution::random(vec![1], 3, &mut rng).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.sites, vec![0, 1, 2]);
        assert!(ab.marginal(&region([0, 2])).unwrap().l1(&a).unwrap() < 1e-15);
        assert!(ab.marginal(&region([1])).unwrap().l1(&b).unwrap() < 1e-15);
    }

    #[test]
    fn placed_gate_resets_dropped_inputs() {
        let p = ClassicalDistribution::point_mass(vec![0, 1], 2, &[1, 1]).unwrap();
        let g = TransitionGate::replacement(vec![0, 1], &ClassicalDistribution::point_mass(vec![1], 2, &[0]).unwrap()).unwrap();
        let out = g.apply_placed(&p).unwrap();
        assert_eq!(out.probs, vec![1.0, 0.0, 0.0, 0.0]);
    }
}
