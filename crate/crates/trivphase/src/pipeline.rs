//! End-to-end learning: error budget, per-step map learning over a covering
//! plan, assembly of the `(k + 1)`-layer generation circuit, verification and
//! the one-way trivial-phase test.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::choi::{choi_apply, ChoiMatrix};
use crate::covering::{build_covering, validate_covering, CoveringPlan, MapKind, Step};
use crate::error::{Error, Result};
use crate::existence::ExistenceMap;
use crate::lattice::{Lattice, Region};
use crate::learner::{petz_baseline_extension, replacement_channel, solve_fidelity_sdp, Certificate, RecoveryProblem};
use crate::linalg;
use crate::recovery::PetzKind;
use crate::shadows::MarginalSource;
use crate::state::{trace_distance, DensityMatrix};

/// Environment variable holding the worker count for per-layer learning.
pub const THREADS_ENV: &str = "TRIVPHASE_THREADS";

/// Largest lattice `generate` simulates as a dense density matrix.
pub const GENERATION_CAP: usize = 12;

/// Printed with every report: a pass is not a membership certificate.
pub const ONE_WAY_NOTE: &str =
    "Fail certifies the state is not generated within budget by this scheme; Success certifies nothing about phase membership.";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub epsilon: f64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// `ε / (8 n² d)`.
    pub eps_lr: f64,
    /// `ε / (8 n)`.
    pub eps_li: f64,
    pub eps_lt: f64,
    pub eps_sdp: f64,
    /// Per-step acceptance threshold `8 ε_LI = ε / n`.
    pub threshold: f64,
}

pub fn make_budget(epsilon: f64, n: usize, d: usize, k: usize) -> Result<ErrorBudget> {
    if !(epsilon > 0.0) || n == 0 || d == 0 || k == 0 {
        return Err(Error::InvalidArgument("budget needs ε > 0 and positive n, d, k".into()));
    }
    let eps_li = epsilon / (8.0 * n as f64);
    Ok(ErrorBudget {
        epsilon,
        n,
        d,
        k,
        eps_lr: epsilon / (8.0 * (n * n * d) as f64),
        eps_li,
        eps_lt: eps_li,
        eps_sdp: eps_li,
        threshold: 8.0 * eps_li,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Learner {
    /// Fidelity SDP, with the Petz baseline above the solver's size cap.
    Sdp,
    PetzBaseline,
    /// Conditional-probability maps; classical distributions only.
    Conditional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    Success,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum MapBody {
    /// A learned channel `input -> output`; sites of `input \ output` are reset to `|0>`.
    Choi(ChoiMatrix),
    /// An explicit construction from a known preparation.
    Existence(ExistenceMap),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlacedMap {
    pub step: usize,
    pub layer: usize,
    pub kind: MapKind,
    pub b: Region,
    pub c: Region,
    pub e: Region,
    pub body: MapBody,
}

impl PlacedMap {
    pub fn support(&self) -> Region {
        match &self.body {
            MapBody::Choi(j) => j.input.iter().chain(&j.output).copied().collect(),
            MapBody::Existence(m) => m.support(),
        }
    }

    pub fn apply(&self, state: &DensityMatrix) -> Result<DensityMatrix> {
        match &self.body {
            MapBody::Choi(j) => {
                let out = choi_apply(j, state)?;
                let gone: Region = j.input.iter().copied().filter(|s| !j.output.contains(s)).collect();
                Ok(if gone.is_empty() { out } else { out.with_zeros(&gone) })
            }
            MapBody::Existence(m) => {
                let out = m.apply(state)?;
                Ok(if m.discard.is_empty() { out } else { out.with_zeros(&m.discard) })
            }
        }
    }
}

/// The `(k + 1)`-layer channel circuit `W`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationCircuit {
    pub lattice: Lattice,
    pub layers: Vec<Vec<PlacedMap>>,
}

impl GenerationCircuit {
    /// Total number of maps `K`.
    pub fn map_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn maps(&self) -> impl Iterator<Item = &PlacedMap> {
        self.layers.iter().flatten()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub layer: usize,
    pub kind: MapKind,
    /// Sites whose marginals the step used.
    pub patch: Region,
    /// Distance on the step's marginals; `None` when the step could not be solved.
    pub achieved: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub fidelity: Option<f64>,
    pub certificate: Option<Certificate>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub flag: Flag,
    pub steps: Vec<StepRecord>,
    pub s: usize,
    pub patch: usize,
    pub learner: Learner,
    /// Shots in the dataset (0 for the exact oracle).
    pub shots: usize,
    /// `||W(ρ_0) - ρ||_1`, filled in by [`verify`] when the true state is known.
    pub total_distance: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

impl LearnReport {
    /// The first step that missed its threshold.
    pub fn witness(&self) -> Option<&StepRecord> {
        self.steps.iter().find(|s| !s.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn union(a: &Region, b: &Region) -> Region {
    a.union(b).copied().collect()
}

/// Sites outside the step's map that enter its acceptance check.
pub fn buffer_region(lattice: &Lattice, s: usize, step: &Step) -> Region {
    let p = &step.parts;
    if step.kind == MapKind::Initialize {
        // the collar a later step would use as B, plus its buffer
        step.prev.intersection(&lattice.dilate(&p.c, (4 * s).saturating_sub(1))).copied().collect()
    } else {
        p.a.intersection(&lattice.dilate(&p.bcde(), (2 * s).saturating_sub(1))).copied().collect()
    }
}

fn failed(record: StepRecord, note: String) -> (StepRecord, Option<PlacedMap>) {
    (StepRecord { achieved: None, pass: false, note, ..record }, None)
}

fn learn_step(
    source: &MarginalSource,
    lattice: &Lattice,
    s: usize,
    budget: &ErrorBudget,
    learner: Learner,
    step: &Step,
) -> (StepRecord, Option<PlacedMap>) {
    let start = Instant::now();
    let p = &step.parts;
    let a_in = buffer_region(lattice, s, step);
    let record = StepRecord {
        step: step.index,
        layer: step.layer,
        kind: step.kind,
        patch: union(&a_in, &p.bcde()),
        achieved: None,
        threshold: budget.threshold,
        pass: false,
        fidelity: None,
        certificate: None,
        note: String::new(),
        seconds: 0.0,
    };
    let placed = |body| PlacedMap {
        step: step.index,
        layer: step.layer,
        kind: step.kind,
        b: p.b.clone(),
        c: p.c.clone(),
        e: p.e.clone(),
        body,
    };
    let outcome = match step.kind {
        MapKind::Initialize => (|| -> Result<(StepRecord, Option<PlacedMap>)> {
            let joint = source.marginal(&union(&a_in, &p.c))?;
            let rho_c = joint.partial_trace(&p.c)?;
            let distance = if a_in.is_empty() {
                0.0
            } else {
                let rest = joint.partial_trace(&a_in)?;
                trace_distance(&joint, &rest.tensor(&rho_c)?)?
            };
            let map = replacement_channel(&rho_c)?;
            let pass = distance <= budget.threshold;
            let rec = StepRecord { achieved: Some(distance), pass, ..record.clone() };
            Ok((rec, pass.then(|| placed(MapBody::Choi(map)))))
        })(),
        MapKind::Extend | MapKind::Recover => (|| -> Result<(StepRecord, Option<PlacedMap>)> {
            let target = source.marginal(&union(&union(&a_in, &p.b), &p.c))?;
            let input = source.marginal(&union(&union(&a_in, &p.b), &p.e))?;
            let problem =
                RecoveryProblem::new(target, input, a_in.clone(), p.b.clone(), p.c.clone(), p.e.clone(), budget.eps_sdp)?;
            let mut note = String::new();
            let learned = match learner {
                Learner::PetzBaseline => petz_baseline_extension(&problem, PetzKind::Plain)?,
                Learner::Conditional => {
                    return Err(Error::InvalidArgument("the conditional learner runs on classical distributions".into()))
                }
                Learner::Sdp => match solve_fidelity_sdp(&problem) {
                    Ok(m) => m,
                    Err(Error::DimensionCap { qubits, cap }) => {
                        note = format!("{qubits} qubits above the SDP cap of {cap}; Petz baseline used");
                        petz_baseline_extension(&problem, PetzKind::Plain)?
                    }
                    Err(e) => return Err(e),
                },
            };
            let pass = learned.distance <= budget.threshold;
            let rec = StepRecord {
                achieved: Some(learned.distance),
                pass,
                fidelity: Some(learned.fidelity),
                certificate: Some(learned.certificate.clone()),
                note,
                ..record.clone()
            };
            Ok((rec, pass.then(|| placed(MapBody::Choi(learned.choi)))))
        })(),
    };
    let (mut rec, map) = match outcome {
        Ok(v) => v,
        Err(e) => failed(record, e.to_string()),
    };
    rec.seconds = start.elapsed().as_secs_f64();
    (rec, map)
}

/// Worker count from [`THREADS_ENV`], defaulting to the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t: &usize| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub(crate) fn check_plan(plan: &CoveringPlan, lattice: &Lattice) -> Result<()> {
    let report = validate_covering(plan);
    if !report.all_pass() {
        let bad = report.conditions.iter().find(|c| !c.pass).expect("a failing condition");
        return Err(Error::InvalidArgument(format!("covering condition {} fails: {}", bad.condition, bad.detail)));
    }
    if &plan.lattice != lattice {
        return Err(Error::LatticeMismatch);
    }
    Ok(())
}

/// Learns the steps of `plan` layer by layer, running the steps of one layer
/// on up to [`thread_count`] workers. Stops after the layer holding the first
/// failed step (in plan order).
pub(crate) fn run_plan<M, F>(plan: &CoveringPlan, learn_one: F) -> (Vec<Vec<M>>, Vec<StepRecord>, Flag)
where
    M: Send,
    F: Fn(&Step) -> (StepRecord, Option<M>) + Sync,
{
    let threads = thread_count();
    let mut layers = Vec::new();
    let mut steps = Vec::new();
    let mut flag = Flag::Success;
    for layer in plan.layers() {
        let todo: Vec<&Step> = plan.steps_in_layer(layer).collect();
        let mut results = Vec::with_capacity(todo.len());
        for chunk in todo.chunks(threads.max(1)) {
            if chunk.len() == 1 {
                results.push(learn_one(chunk[0]));
                continue;
            }
            std::thread::scope(|scope| {
                let f = &learn_one;
                let handles: Vec<_> = chunk.iter().map(|st| scope.spawn(move || f(st))).collect();
                for h in handles {
                    results.push(h.join().expect("learning worker panicked"));
                }
            });
        }
        let mut maps = Vec::new();
        for (rec, map) in results {
            let pass = rec.pass;
            steps.push(rec);
            if !pass {
                flag = Flag::Fail;
                break;
            }
            maps.extend(map);
        }
        layers.push(maps);
        if flag == Flag::Fail {
            break;
        }
    }
    (layers, steps, flag)
}

/// Runs the learning algorithm over `plan`. Steps of one layer are learned
/// concurrently; the first step (in plan order) that misses its threshold
/// ends the run with `Flag::Fail`.
pub fn learn(
    source: &MarginalSource,
    lattice: &Lattice,
    budget: &ErrorBudget,
    plan: &CoveringPlan,
    learner: Learner,
) -> Result<(GenerationCircuit, LearnReport)> {
    check_plan(plan, lattice)?;
    let start = Instant::now();
    let (layers, steps, flag) = run_plan(plan, |st| learn_step(source, lattice, plan.s, budget, learner, st));
    let circuit = GenerationCircuit { lattice: lattice.clone(), layers };
    let report = LearnReport {
        flag,
        steps,
        s: plan.s,
        patch: plan.patch,
        learner,
        shots: source.shots(),
        total_distance: None,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((circuit, report))
}

/// Retries `learn` over increasing patch sizes, returning the first success
/// or the last attempt. Geometries that admit no plan are skipped.
pub fn learn_escalating(
    source: &MarginalSource,
    lattice: &Lattice,
    budget: &ErrorBudget,
    s: usize,
    patches: &[usize],
    learner: Learner,
) -> Result<(GenerationCircuit, LearnReport)> {
    let mut last = None;
    for &patch in patches {
        let plan = match build_covering(lattice, s, patch) {
            Ok(p) => p,
            Err(Error::InfeasibleGeometry(_)) | Err(Error::InvalidArgument(_)) => continue,
            Err(e) => return Err(e),
        };
        let out = learn(source, lattice, budget, &plan, learner)?;
        if out.1.flag == Flag::Success {
            return Ok(out);
        }
        last = Some(out);
    }
    last.ok_or_else(|| Error::InfeasibleGeometry(format!("no patch size in {patches:?} admits a plan with s = {s}")))
}

/// `W(|0...0><0...0|)` on the full lattice.
pub fn generate(w: &GenerationCircuit) -> Result<DensityMatrix> {
    let n = w.lattice.n;
    if n > GENERATION_CAP {
        return Err(Error::SimulationCap { qubits: n, cap: GENERATION_CAP });
    }
    let mut state = DensityMatrix::zero_state(&w.lattice.all());
    for map in w.maps() {
        state = map.apply(&state)?;
    }
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub distance: f64,
    /// `min(ε, K · 8ε_LI)`.
    pub bound: f64,
    pub pass: bool,
}

pub fn verify_bound(w: &GenerationCircuit, budget: &ErrorBudget) -> f64 {
    budget.epsilon.min(w.map_count() as f64 * budget.threshold)
}

pub fn verify(w: &GenerationCircuit, true_state: &DensityMatrix, budget: &ErrorBudget) -> Result<Verification> {
    let out = generate(w)?;
    let distance = trace_distance(&out, true_state)?;
    let bound = verify_bound(w, budget);
    Ok(Verification { distance, bound, pass: distance <= bound })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneWayOutcome {
    pub flag: Flag,
    pub witness: Option<StepRecord>,
    pub report: LearnReport,
}

pub fn one_way_test(
    source: &MarginalSource,
    lattice: &Lattice,
    budget: &ErrorBudget,
    plan: &CoveringPlan,
    learner: Learner,
) -> Result<OneWayOutcome> {
    let (_, report) = learn(source, lattice, budget, plan, learner)?;
    Ok(OneWayOutcome { flag: report.flag, witness: report.witness().cloned(), report })
}

fn sites_string(r: &Region) -> String {
    r.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

fn kind_name(k: MapKind) -> &'static str {
    match k {
        MapKind::Initialize => "initialize",
        MapKind::Extend => "extend",
        MapKind::Recover => "recover",
    }
}

/// Writes the per-step CSV: `step,layer,kind,patch sites,achieved,threshold,pass`.
pub fn write_steps_csv<W: Write>(report: &LearnReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    wr.write_record(["step", "layer", "kind", "patch sites", "achieved", "threshold", "pass"]).map_err(csv_err)?;
    for r in &report.steps {
        wr.write_record([
            r.step.to_string(),
            r.layer.to_string(),
            kind_name(r.kind).to_string(),
            sites_string(&r.patch),
            r.achieved.map(|a| format!("{a:.6e}")).unwrap_or_default(),
            format!("{:.6e}", r.threshold),
            r.pass.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Human-readable summary and the per-step CSV. A failing step is listed first.
pub fn report_render(report: &LearnReport) -> Result<(String, String)> {
    let mut text = String::new();
    let flag = match report.flag {
        Flag::Success => "Success",
        Flag::Fail => "Fail",
    };
    text.push_str(&format!(
        "flag: {flag}\nlearner: {:?}  s = {}  patch = {}  shots = {}\n",
        report.learner, report.s, report.patch, report.shots
    ));
    if let Some(d) = report.total_distance {
        text.push_str(&format!("total distance: {d:.6e}\n"));
    }
    let mut rows: Vec<&StepRecord> = report.steps.iter().filter(|r| !r.pass).collect();
    rows.extend(report.steps.iter().filter(|r| r.pass));
    for r in rows {
        let achieved = r.achieved.map(|a| format!("{a:.3e}")).unwrap_or_else(|| "n/a".into());
        text.push_str(&format!(
            "  {} step {:>3} layer {} {:<10} [{}] achieved {} threshold {:.3e}{}\n",
            if r.pass { "pass" } else { "FAIL" },
            r.step,
            r.layer,
            kind_name(r.kind),
            sites_string(&r.patch),
            achieved,
            r.threshold,
            if r.note.is_empty() { String::new() } else { format!("  ({})", r.note) }
        ));
    }
    text.push_str(ONE_WAY_NOTE);
    text.push('\n');
    let mut csv = Vec::new();
    write_steps_csv(report, &mut csv)?;
    Ok((text, String::from_utf8(csv).map_err(|e| Error::Format(e.to_string()))?))
}

/// A trivial product state with a Bell pair `(|00> + |11>)/√2` placed on
/// `pair`; the other sites hold random single-site mixed states.
pub fn bell_obstruction_state(lattice: &Lattice, pair: (usize, usize), seed: u64) -> Result<DensityMatrix> {
    use rand::SeedableRng;
    let (x, y) = pair;
    if x == y || x >= lattice.n || y >= lattice.n {
        return Err(Error::InvalidArgument(format!("bad Bell pair {pair:?}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = linalg::C64::new(0.0, 0.0);
    let bell = DensityMatrix::pure(vec![x.min(y), x.max(y)], &[linalg::C64::new(h, 0.0), z, z, linalg::C64::new(h, 0.0)])?;
    let mut state = bell;
    for site in 0..lattice.n {
        if site == x || site == y {
            continue;
        }
        let local = DensityMatrix::new(vec![site], linalg::random_density(2, 2, &mut rng))?;
        state = state.tensor(&local)?;
    }
    Ok(state)
}

/// A site pair that the first extension or recovery step of `plan` must
/// bridge: one end in its `C`, the other the farthest site of its buffer.
pub fn bridging_pair(plan: &CoveringPlan) -> Option<(usize, usize)> {
    let lat = &plan.lattice;
    plan.steps.iter().filter(|st| st.kind != MapKind::Initialize).find_map(|st| {
        let buf = buffer_region(lat, plan.s, st);
        let c = *st.parts.c.iter().next()?;
        let far = buf.iter().copied().max_by_key(|&a| (lat.distance(a, c), a))?;
        Some((c, far))
    })
}

/// Replaces a map body, e.g. to corrupt a circuit deliberately.
pub fn replace_map(w: &mut GenerationCircuit, step: usize, body: MapBody) -> Result<()> {
    let m = w
        .layers
        .iter_mut()
        .flatten()
        .find(|m| m.step == step)
        .ok_or_else(|| Error::InvalidArgument(format!("no map for step {step}")))?;
    m.body = body;
    Ok(())
}

/// Reset of `region` as a Choi map.
pub fn reset_map(region: &Region) -> Result<MapBody> {
    Ok(MapBody::Choi(replacement_channel(&DensityMatrix::zero_state(region))?))
}
