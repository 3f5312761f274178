//! Explicit recovery and extension maps built from a certified preparation:
//! `Ψ = Q₁ ∘ R_{C(s)\C} ∘ P_B` and `Φ = Tr_DE ∘ Q₁ ∘ R_{F\CD} ∘ P_{BE}`.

use serde::{Deserialize, Serialize};

use crate::circuit::LayeredCircuit;
use crate::covering::Pentapartition;
use crate::error::{Error, Result};
use crate::factory::{local_inversion, LocalInversion, ReversiblePreparation};
use crate::lattice::Region;
use crate::state::{trace_distance, DensityMatrix};

/// Smallest width for which the constructions hold: `A(reach)` must miss `C(s)`
/// whenever `dist(A, C) >= 2s`.
pub fn minimal_width(prep: &ReversiblePreparation) -> usize {
    prep.reach() + 1
}

/// Numerical slack on top of the measured local inversion error.
pub const EXISTENCE_SLACK: f64 = 1e-8;

/// A map assembled from the preparation, as the gate sequence it runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExistenceMap {
    pub inversion: LocalInversion,
    /// Sites reset between the inversion and `Q₁`.
    pub reset: Region,
    pub q1: LayeredCircuit,
    /// Sites traced out at the end (`D ∪ E` for extension maps).
    pub discard: Region,
}

impl ExistenceMap {
    /// Runs the map on a full-register state; discarded sites are removed.
    pub fn apply(&self, state: &DensityMatrix) -> Result<DensityMatrix> {
        let mut cur = self.inversion.apply(state)?;
        if !self.reset.is_empty() {
            cur = cur.reset(&self.reset);
        }
        cur = self.q1.apply(&cur)?;
        Ok(cur.trace_out(&self.discard))
    }

    pub fn support(&self) -> Region {
        let mut s = self.inversion.support();
        s.extend(self.reset.iter().copied());
        s.extend(self.q1.support());
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExistenceCheck {
    pub map: ExistenceMap,
    /// Achieved recovery or extension distance.
    pub distance: f64,
    /// Measured local inversion error that bounds it.
    pub bound: f64,
    pub holds: bool,
}

fn union(a: &Region, b: &Region) -> Region {
    a.union(b).copied().collect()
}

fn check_partition(prep: &ReversiblePreparation, p: &Pentapartition, s: usize) -> Result<()> {
    let lat = &prep.lattice;
    for r in [&p.a, &p.b, &p.c, &p.d, &p.e] {
        lat.check(r)?;
    }
    let total = p.a.len() + p.b.len() + p.c.len() + p.d.len() + p.e.len();
    let all: Region = p.a.iter().chain(p.bcde().iter()).copied().collect();
    if total != lat.n || all != lat.all() {
        return Err(Error::InvalidArgument("regions do not partition the lattice".into()));
    }
    if s <= prep.reach() {
        return Err(Error::InvalidArgument(format!(
            "width s = {s} must exceed the circuit's lightcone reach {}",
            prep.reach()
        )));
    }
    if !lat.separated(&p.a, &p.c, 2 * s) {
        return Err(Error::InfeasibleGeometry(format!("dist(A, C) < 2s = {}", 2 * s)));
    }
    if !lat.separated(&p.b, &p.d, 2 * s) {
        return Err(Error::InfeasibleGeometry(format!("dist(B, D) < 2s = {}", 2 * s)));
    }
    Ok(())
}

/// Recovery map `Ψ_{B→BC}` for the tripartition `A, B, C` (`D = E = ∅`),
/// checked as `||ρ - Ψ(ρ_AB ⊗ |0><0|_C)||_1 ≤ ||P_B(ρ) - B_AC(ρ_0)||_1`.
pub fn recovery_existence(
    prep: &ReversiblePreparation,
    a: &Region,
    b: &Region,
    c: &Region,
    s: usize,
) -> Result<ExistenceCheck> {
    let parts = Pentapartition { a: a.clone(), b: b.clone(), c: c.clone(), ..Default::default() };
    check_partition(prep, &parts, s)?;
    let inversion = local_inversion(prep, b)?;
    let b_a = prep.circuit.backward_lightcone(a);
    let q1 = prep.circuit.subtract(&b_a);
    let reset: Region = prep.lattice.dilate(c, s).difference(c).copied().collect();
    let map = ExistenceMap { inversion, reset, q1, discard: Region::new() };
    let input = prep.rho.reset(c);
    let out = map.apply(&input)?;
    let distance = trace_distance(&out, &prep.rho)?;
    let bound = map.inversion.error;
    Ok(ExistenceCheck { holds: distance <= bound + EXISTENCE_SLACK, map, distance, bound })
}

/// Extension map `Φ_{BE→BC}` for a pentapartition, checked as
/// `||ρ_ABC - Tr_DE Φ(ρ_ABE ⊗ |0><0|_CD)||_1 ≤ ||P_BE(ρ) - B_ACD(ρ_0)||_1`.
pub fn extension_existence(prep: &ReversiblePreparation, parts: &Pentapartition, s: usize) -> Result<ExistenceCheck> {
    check_partition(prep, parts, s)?;
    let be = union(&parts.b, &parts.e);
    let cd = union(&parts.c, &parts.d);
    let inversion = local_inversion(prep, &be)?;
    let b_a = prep.circuit.backward_lightcone(&parts.a);
    let b_bc = prep.circuit.backward_lightcone(&union(&parts.b, &parts.c));
    let q1 = b_bc.subtract(&b_a);
    let f: Region = prep.lattice.dilate(&cd, s).difference(&parts.a).copied().collect();
    let reset: Region = f.difference(&cd).copied().collect();
    let map = ExistenceMap { inversion, reset, q1, discard: union(&parts.d, &parts.e) };
    let input = prep.rho.reset(&cd);
    let out = map.apply(&input)?;
    let abc: Region = parts.a.iter().chain(&parts.b).chain(&parts.c).copied().collect();
    let target = prep.rho.partial_trace(&abc)?;
    let distance = trace_distance(&out, &target)?;
    let bound = map.inversion.error;
    Ok(ExistenceCheck { holds: distance <= bound + EXISTENCE_SLACK, map, distance, bound })
}

/// All chain geometries used by the existence suite: for every interval `C`
/// of width 1 or 2, the tripartition with `B` the `2s - 1` collar, and the
/// pentapartition that treats the sites left of `C` as already learned.
pub fn chain_geometries(n: usize, s: usize) -> Vec<Pentapartition> {
    let lat = crate::lattice::Lattice::chain(n);
    let mut out = Vec::new();
    for w in 1..=2usize {
        for x in 0..n.saturating_sub(w - 1) {
            let c: Region = (x..x + w).collect();
            let b: Region = lat.dilate(&c, (2 * s).saturating_sub(1)).difference(&c).copied().collect();
            let a = lat.complement(&union(&b, &c));
            out.push(Pentapartition { a, b, c: c.clone(), ..Default::default() });
            let prev: Region = (0..x).collect();
            let step = crate::covering::make_step(&lat, s, &prev, c, 2, crate::covering::MapKind::Extend);
            if !step.parts.d.is_empty() {
                out.push(step.parts);
            }
        }
    }
    out
}
