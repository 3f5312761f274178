//! Covering plans: an ordered schedule of regions `S_0 = ∅, ..., S_K = Λ`
//! grouped into `k + 1` parallel layers, plus a validator for the five
//! structural conditions a plan must meet before it drives the learner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    Initialize,
    Extend,
    Recover,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pentapartition {
    pub a: Region,
    pub b: Region,
    pub c: Region,
    pub d: Region,
    pub e: Region,
}

impl Pentapartition {
    /// `B ∪ C ∪ D ∪ E`, the support of the step's map.
    pub fn bcde(&self) -> Region {
        self.b.iter().chain(&self.c).chain(&self.d).chain(&self.e).copied().collect()
    }

    pub fn bc(&self) -> Region {
        self.b.union(&self.c).copied().collect()
    }

    pub fn be(&self) -> Region {
        self.b.union(&self.e).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub layer: usize,
    pub kind: MapKind,
    pub prev: Region,
    pub next: Region,
    pub parts: Pentapartition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveringPlan {
    pub lattice: Lattice,
    pub s: usize,
    pub patch: usize,
    pub steps: Vec<Step>,
}

impl CoveringPlan {
    pub fn layers(&self) -> Vec<usize> {
        let mut l: Vec<usize> = self.steps.iter().map(|s| s.layer).collect();
        l.dedup();
        l
    }

    pub fn steps_in_layer(&self, layer: usize) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(move |s| s.layer == layer)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Builds the step that learns `c` given the learned set `prev`.
///
/// `B`, `D`, `E` all lie in the `2s` collar of `C`: unlearned collar sites
/// become `D`, learned collar sites within `2s` of `D` are discarded as `E`,
/// and the remaining learned collar is `B`.
pub fn make_step(lattice: &Lattice, s: usize, prev: &Region, c: Region, layer: usize, kind: MapKind) -> Step {
    let mut parts = Pentapartition { c, ..Default::default() };
    if kind != MapKind::Initialize {
        let collar: Region = lattice.dilate(&parts.c, 2 * s).difference(&parts.c).copied().collect();
        parts.d = collar.difference(prev).copied().collect();
        let near_d = lattice.dilate(&parts.d, 2 * s);
        for &site in collar.intersection(prev) {
            if near_d.contains(&site) {
                parts.e.insert(site);
            } else {
                parts.b.insert(site);
            }
        }
    }
    let used = parts.bcde();
    parts.a = lattice.complement(&used);
    let next: Region = prev.union(&parts.c).filter(|x| !parts.e.contains(x)).copied().collect();
    Step { index: 0, layer, kind, prev: prev.clone(), next, parts }
}

fn assemble(lattice: &Lattice, s: usize, patch: usize, layers: Vec<(MapKind, Vec<Region>)>) -> CoveringPlan {
    let mut steps = Vec::new();
    let mut learned = Region::new();
    for (li, (kind, regions)) in layers.into_iter().enumerate() {
        for c in regions {
            let mut step = make_step(lattice, s, &learned, c, li + 1, kind);
            step.index = steps.len() + 1;
            learned = step.next.clone();
            steps.push(step);
        }
    }
    CoveringPlan { lattice: lattice.clone(), s, patch, steps }
}

/// Generates a covering plan with `k + 1` layers for `k ∈ {1, 2}`.
pub fn build_covering(lattice: &Lattice, s: usize, patch: usize) -> Result<CoveringPlan> {
    if s == 0 {
        return Err(Error::InvalidArgument("lightcone width s must be at least 1".into()));
    }
    if patch < 4 * s + 2 {
        return Err(Error::InvalidArgument(format!("patch {patch} is below 4s + 2 = {}", 4 * s + 2)));
    }
    match lattice.k {
        1 => build_chain(lattice, s, patch),
        2 => build_square(lattice, s, patch),
        k => Err(Error::InvalidArgument(format!("covering generation supports k = 1, 2 (got {k})"))),
    }
}

/// Splits `total` into `parts` sizes with the given minima, spreading the
/// leftover one site at a time.
fn spread(total: usize, minima: &[usize], cap: usize) -> Option<Vec<usize>> {
    let base: usize = minima.iter().sum();
    if base > total {
        return None;
    }
    let mut sizes = minima.to_vec();
    let mut left = total - base;
    while left > 0 {
        let mut moved = false;
        for sz in sizes.iter_mut() {
            if left > 0 && *sz < cap {
                *sz += 1;
                left -= 1;
                moved = true;
            }
        }
        if !moved {
            return None;
        }
    }
    Some(sizes)
}

fn build_chain(lattice: &Lattice, s: usize, patch: usize) -> Result<CoveringPlan> {
    let l = lattice.l;
    let gap = (patch - 4 * s).min(2 * s).max(1);
    let periodic = lattice.boundary == Boundary::Periodic;
    // largest number of recovery gaps that still leaves room for the blocks
    let fits = |m: usize| -> bool {
        let need = if periodic { m * (gap + 4 * s) } else { 4 * s + m * gap + (m - 1) * 4 * s };
        need <= l
    };
    let mut m = 0;
    while fits(m + 1) {
        m += 1;
    }
    if m == 0 {
        return Err(Error::InfeasibleGeometry(format!(
            "chain of length {l} cannot hold two blocks and a gap with s = {s}"
        )));
    }
    let (nblocks, minima): (usize, Vec<usize>) = if periodic {
        (m, vec![4 * s; m])
    } else {
        let mut v = vec![4 * s; m + 1];
        v[0] = 2 * s;
        v[m] = 2 * s;
        (m + 1, v)
    };
    let sizes = spread(l - m * gap, &minima, patch).ok_or_else(|| {
        Error::InfeasibleGeometry(format!("chain of length {l} needs blocks wider than patch {patch}"))
    })?;
    let mut blocks = Vec::with_capacity(nblocks);
    let mut gaps = Vec::with_capacity(m);
    let mut pos = 0;
    for (i, &sz) in sizes.iter().enumerate() {
        blocks.push((pos..pos + sz).collect::<Region>());
        pos += sz;
        if i < m {
            gaps.push((pos..pos + gap).collect::<Region>());
            pos += gap;
        }
    }
    debug_assert_eq!(pos, l);
    Ok(assemble(lattice, s, patch, vec![(MapKind::Initialize, blocks), (MapKind::Recover, gaps)]))
}

fn square_candidate(lattice: &Lattice, s: usize, patch: usize, w: usize, g: usize, m: usize) -> Option<CoveringPlan> {
    let l = lattice.l;
    let t = w + g;
    let p = if lattice.boundary == Boundary::Periodic {
        if l % t != 0 {
            return None;
        }
        l / t
    } else {
        if l < w || (l - w) % t != 0 {
            return None;
        }
        (l - w) / t + 1
    };
    if p < 2 {
        return None;
    }
    let periodic = lattice.boundary == Boundary::Periodic;
    let rect = |x0: usize, x1: usize, y0: usize, y1: usize| -> Region {
        let mut r = Region::new();
        for y in y0..y1 {
            for x in x0..x1 {
                r.insert(lattice.site(&[x % l, y % l]));
            }
        }
        r
    };
    let mut blocks = Vec::new();
    for by in 0..p {
        for bx in 0..p {
            blocks.push(rect(bx * t, bx * t + w, by * t, by * t + w));
        }
    }
    let mut bridges = Vec::new();
    let nb = if periodic { p } else { p - 1 };
    for by in 0..p {
        for bx in 0..nb {
            bridges.push(rect(bx * t + w, bx * t + t, by * t + m, by * t + w - m));
        }
    }
    for by in 0..nb {
        for bx in 0..p {
            bridges.push(rect(bx * t + m, bx * t + w - m, by * t + w, by * t + t));
        }
    }
    let mut plan = assemble(lattice, s, patch, vec![(MapKind::Initialize, blocks), (MapKind::Extend, bridges)]);
    let learned = plan.steps.last().map(|st| st.next.clone()).unwrap_or_default();
    let faces = lattice.components(&lattice.complement(&learned));
    let mut cursor = learned;
    for face in faces {
        let mut step = make_step(lattice, s, &cursor, face, 3, MapKind::Recover);
        step.index = plan.steps.len() + 1;
        cursor = step.next.clone();
        plan.steps.push(step);
    }
    validate_covering(&plan).all_pass().then_some(plan)
}

fn build_square(lattice: &Lattice, s: usize, patch: usize) -> Result<CoveringPlan> {
    for w in (1..=patch).rev() {
        for g in 1..=patch {
            for m in 0..(w + 1) / 2 {
                if w - 2 * m == 0 {
                    continue;
                }
                if let Some(plan) = square_candidate(lattice, s, patch, w, g, m) {
                    return Ok(plan);
                }
            }
        }
    }
    Err(Error::InfeasibleGeometry(format!(
        "no block/bridge/face arrangement fits a {0}x{0} lattice with s = {s} and patch = {patch}",
        lattice.l
    )))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: usize,
    pub pass: bool,
    /// Index of the first offending step, when the failure is attributable to one.
    pub first_violation: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn condition(&self, i: usize) -> &ConditionCheck {
        &self.conditions[i - 1]
    }
}

struct Checker {
    condition: usize,
    failure: Option<(Option<usize>, String)>,
}

impl Checker {
    fn new(condition: usize) -> Self {
        Self { condition, failure: None }
    }

    fn require(&mut self, ok: bool, step: Option<usize>, detail: impl FnOnce() -> String) {
        if !ok && self.failure.is_none() {
            self.failure = Some((step, detail()));
        }
    }

    fn finish(self) -> ConditionCheck {
        match self.failure {
            None => ConditionCheck { condition: self.condition, pass: true, first_violation: None, detail: String::new() },
            Some((step, detail)) => ConditionCheck { condition: self.condition, pass: false, first_violation: step, detail },
        }
    }
}

fn disjoint(a: &Region, b: &Region) -> bool {
    a.intersection(b).next().is_none()
}

/// Checks the five structural conditions on a plan. Failures are reported,
/// never raised.
pub fn validate_covering(plan: &CoveringPlan) -> ValidationReport {
    let lat = &plan.lattice;
    let s2 = 2 * plan.s;
    let full = lat.all();

    let mut c1 = Checker::new(1);
    c1.require(!plan.steps.is_empty(), None, || "plan has no steps".into());
    if let Some(first) = plan.steps.first() {
        c1.require(first.prev.is_empty(), Some(first.index), || "S_0 is not empty".into());
    }
    for w in plan.steps.windows(2) {
        c1.require(w[1].prev == w[0].next, Some(w[1].index), || "S_{i-1} does not chain from the previous step".into());
    }
    if let Some(last) = plan.steps.last() {
        c1.require(last.next == full, Some(last.index), || {
            format!("S_K misses {} sites", full.len() - last.next.len())
        });
    }

    let mut c2 = Checker::new(2);
    let mut c3 = Checker::new(3);
    for st in &plan.steps {
        let p = &st.parts;
        let i = Some(st.index);
        let in_range = [&p.a, &p.b, &p.c, &p.d, &p.e, &st.prev, &st.next].iter().all(|r| lat.check(r).is_ok());
        c2.require(in_range, i, || "site index out of range".into());
        if !in_range {
            continue;
        }
        let total = p.a.len() + p.b.len() + p.c.len() + p.d.len() + p.e.len();
        let union: Region = p.a.iter().chain(p.bcde().iter()).copied().collect();
        c2.require(total == lat.n && union == full, i, || "A, B, C, D, E do not partition the lattice".into());
        let c_want: Region = st.next.difference(&st.prev).copied().collect();
        let e_want: Region = st.prev.difference(&st.next).copied().collect();
        c2.require(p.c == c_want, i, || "C differs from S_i \\ S_{i-1}".into());
        c2.require(p.e == e_want, i, || "E differs from S_{i-1} \\ S_i".into());
        c2.require(p.b.iter().all(|x| st.prev.contains(x) && st.next.contains(x)), i, || {
            "B is not inside S_{i-1} ∩ S_i".into()
        });
        c2.require(p.d.iter().all(|x| !st.prev.contains(x) && !st.next.contains(x)), i, || {
            "D meets S_{i-1} ∪ S_i".into()
        });
        if st.kind != MapKind::Initialize {
            c2.require(lat.separated(&p.a, &p.c, s2), i, || format!("dist(A, C) < {s2}"));
            c2.require(lat.separated(&p.b, &p.d, s2), i, || format!("dist(B, D) < {s2}"));
        }

        let bcde = p.bcde();
        let cap = plan.patch.pow(lat.k as u32);
        c3.require(bcde.len() <= cap, i, || format!("|BCDE| = {} exceeds {cap}", bcde.len()));
        c3.require(lat.extent(&bcde) <= plan.patch, i, || {
            format!("BCDE extent {} exceeds patch {}", lat.extent(&bcde), plan.patch)
        });
        c3.require(lat.is_simply_connected(&p.c), i, || "C is not simply connected".into());
        c3.require(lat.is_simply_connected(&bcde), i, || "BCDE is not simply connected".into());
    }

    let mut c4 = Checker::new(4);
    let layers = plan.layers();
    let mut sorted = layers.clone();
    sorted.sort_unstable();
    c4.require(layers == sorted && sorted.windows(2).all(|w| w[0] < w[1]), None, || {
        "step order does not follow layer order".into()
    });
    let want_layers: Vec<usize> = (1..=lat.k + 1).collect();
    c4.require(sorted == want_layers, None, || format!("layers {sorted:?}, expected {want_layers:?}"));
    for (x, a) in plan.steps.iter().enumerate() {
        let sa = a.parts.bcde();
        for b in &plan.steps[x + 1..] {
            if b.layer == a.layer {
                c4.require(disjoint(&sa, &b.parts.bcde()), Some(b.index), || {
                    format!("steps {} and {} overlap within layer {}", a.index, b.index, a.layer)
                });
            }
        }
    }

    let mut c5 = Checker::new(5);
    let last_layer = lat.k + 1;
    for st in &plan.steps {
        let p = &st.parts;
        if st.layer == 1 {
            c5.require(p.b.is_empty() && p.d.is_empty() && p.e.is_empty(), Some(st.index), || {
                "layer-1 step has nonempty B, D or E".into()
            });
        }
        if st.layer == last_layer {
            c5.require(p.d.is_empty() && p.e.is_empty(), Some(st.index), || {
                "last-layer step has nonempty D or E".into()
            });
        }
    }

    ValidationReport { conditions: vec![c1.finish(), c2.finish(), c3.finish(), c4.finish(), c5.finish()] }
}
