//! Experiment configuration and the subcommands behind the `trivphase` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checks::{outcomes_csv, theorem_suite};
use crate::classical::{
    ising_chain, learn_classical, random_markov_chain, verify_classical, ClassicalCircuit, ClassicalDistribution,
    ClassicalSource,
};
use crate::covering::build_covering;
use crate::error::{Error, Result};
use crate::factory::{make_noisy_target, make_unitary_target, ReversiblePreparation};
use crate::io::{read_json, write_json};
use crate::lattice::{Boundary, Lattice};
use crate::pipeline::{
    bell_obstruction_state, bridging_pair, learn, make_budget, report_render, verify, Flag,
    GenerationCircuit, LearnReport, Learner,
};
use crate::shadows::{collect_shadow_histogram, MarginalSource};
use crate::state::DensityMatrix;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_LEARN_FAIL: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    #[serde(default = "one")]
    pub k: usize,
    pub l: usize,
    #[serde(default)]
    pub periodic: bool,
}

fn one() -> usize {
    1
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice> {
        let b = if self.periodic { Boundary::Periodic } else { Boundary::Open };
        Lattice::new(self.k, self.l, b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Unitary { depth: usize, #[serde(default = "two")] gate_size: usize },
    Noisy { depth: usize, #[serde(default = "two")] gate_size: usize, noise: f64 },
    /// A Bell pair across the gap between two first-layer blocks; other sites hold random product states.
    Bell,
    /// A density matrix JSON file.
    StateFile { path: PathBuf },
    /// A preparation written by `prepare`.
    Preparation { path: PathBuf },
    /// Classical only: a Markov chain whose kernel is redrawn every `segment` sites (0: never).
    MarkovChain { q: usize, #[serde(default)] segment: usize },
    /// Classical only: nearest-neighbour Ising chain.
    Ising { beta: f64, h: f64 },
    /// Classical only: a distribution JSON file.
    DistributionFile { path: PathBuf },
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSpec,
    pub target: TargetSpec,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_learner")]
    pub learner: Learner,
    #[serde(default)]
    pub seed: u64,
    /// Shots for the shadow or sample estimator; `None` uses exact marginals.
    #[serde(default)]
    pub shots: Option<u64>,
    /// Buffer width `s`.
    #[serde(default = "one")]
    pub width: usize,
    /// Cap on the number of sites per learned map.
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_delta() -> f64 {
    0.05
}
fn default_learner() -> Learner {
    Learner::Sdp
}
fn default_patch() -> usize {
    6
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 2.0) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 2], got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.width == 0 {
            return Err(Error::InvalidArgument("width must be at least 1".into()));
        }
        let path = match &self.target {
            TargetSpec::StateFile { path } | TargetSpec::Preparation { path } | TargetSpec::DistributionFile { path } => {
                Some(path)
            }
            _ => None,
        };
        if let Some(p) = path {
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!("target file {} does not exist", p.display())));
            }
        }
        self.lattice.build().map(|_| ())
    }
}

/// A command's result: what was written and the process exit code.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub message: String,
    pub artifacts: Vec<PathBuf>,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, body)?;
        self.written.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.dir.join(name);
        write_json(&p, value)?;
        self.written.push(p);
        Ok(())
    }

    fn finish(self, code: i32, message: String) -> RunOutcome {
        RunOutcome { code, message, artifacts: self.written }
    }
}

/// The quantum target, with its preparation when one is known.
fn quantum_target(cfg: &ExperimentConfig, lat: &Lattice) -> Result<(DensityMatrix, Option<ReversiblePreparation>)> {
    Ok(match &cfg.target {
        TargetSpec::Unitary { depth, gate_size } => {
            let p = make_unitary_target(cfg.seed, lat, *depth, *gate_size)?;
            (p.rho.clone(), Some(p))
        }
        TargetSpec::Noisy { depth, gate_size, noise } => {
            let p = make_noisy_target(cfg.seed, lat, *depth, *gate_size, *noise)?;
            (p.rho.clone(), Some(p))
        }
        TargetSpec::Bell => {
            let plan = build_covering(lat, cfg.width, cfg.patch)?;
            let pair = bridging_pair(&plan)
                .ok_or_else(|| Error::InfeasibleGeometry("the covering has no pair of separated first-layer blocks".into()))?;
            (bell_obstruction_state(lat, pair, cfg.seed)?, None)
        }
        TargetSpec::StateFile { path } => (read_json(path)?, None),
        TargetSpec::Preparation { path } => {
            let p: ReversiblePreparation = read_json(path)?;
            (p.rho.clone(), Some(p))
        }
        _ => return Err(Error::InvalidArgument("classical target given to a quantum command".into())),
    })
}

fn classical_target(cfg: &ExperimentConfig, lat: &Lattice) -> Result<ClassicalDistribution> {
    match &cfg.target {
        TargetSpec::MarkovChain { q, segment } => random_markov_chain(lat.n, *q, *segment, cfg.seed),
        TargetSpec::Ising { beta, h } => ising_chain(lat.n, *beta, *h),
        TargetSpec::DistributionFile { path } => ClassicalDistribution::from_json(&fs::read_to_string(path)?),
        _ => Err(Error::InvalidArgument("quantum target given to the classical command".into())),
    }
}

/// Writes the certified preparation and its state.
pub fn prepare(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let lat = cfg.lattice.build()?;
    let (rho, prep) = quantum_target(cfg, &lat)?;
    let mut out = Artifacts::new(&cfg.out)?;
    out.json("state.json", &rho)?;
    let msg = match prep {
        Some(p) => {
            out.json("preparation.json", &p)?;
            format!("prepared {} qubits, depth {}, certified eps_LR {:.3e}", p.n(), p.depth(), p.certified_eps_lr)
        }
        None => format!("wrote a {}-qubit state with no preparation", rho.nqubits()),
    };
    Ok(out.finish(0, msg))
}

/// Runs the learner and writes the generation circuit and its report.
pub fn learn_cmd(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let lat = cfg.lattice.build()?;
    let (rho, prep) = quantum_target(cfg, &lat)?;
    let depth = prep.as_ref().map_or(1, |p| p.depth().max(1));
    let budget = make_budget(cfg.epsilon, lat.n, depth, cfg.width)?;
    let plan = build_covering(&lat, cfg.width, cfg.patch)?;
    let source = match cfg.shots {
        None => MarginalSource::Exact(rho.clone()),
        Some(m) => MarginalSource::Histogram(collect_shadow_histogram(&rho, m, cfg.seed)?),
    };
    let (w, mut report) = learn(&source, &lat, &budget, &plan, cfg.learner)?;
    let mut out = Artifacts::new(&cfg.out)?;
    let code = if report.flag == Flag::Success {
        report.total_distance = Some(verify(&w, &rho, &budget)?.distance);
        out.text("circuit.json", &w.to_json()?)?;
        0
    } else {
        EXIT_LEARN_FAIL
    };
    write_report(&mut out, &report)?;
    let msg = match report.witness() {
        None => format!("Success: {} maps in {} layers", w.map_count(), w.layers.len()),
        Some(s) => format!("Fail at step {} ({:?}) on patch {:?}", s.step, s.kind, s.patch),
    };
    Ok(out.finish(code, msg))
}

fn write_report(out: &mut Artifacts, report: &LearnReport) -> Result<()> {
    let (text, csv) = report_render(report)?;
    out.text("report.json", &report.to_json()?)?;
    out.text("report.txt", &text)?;
    out.text("steps.csv", &csv)
}

/// Recomputes the distance of a learned circuit from the target.
pub fn verify_cmd(cfg: &ExperimentConfig, circuit: &Path) -> Result<RunOutcome> {
    let lat = cfg.lattice.build()?;
    let (rho, prep) = quantum_target(cfg, &lat)?;
    let w = GenerationCircuit::from_json(&fs::read_to_string(circuit)?)?;
    if w.lattice != lat {
        return Err(Error::LatticeMismatch);
    }
    let depth = prep.as_ref().map_or(1, |p| p.depth().max(1));
    let budget = make_budget(cfg.epsilon, lat.n, depth, cfg.width)?;
    let v = verify(&w, &rho, &budget)?;
    let mut out = Artifacts::new(&cfg.out)?;
    out.json("verification.json", &v)?;
    let code = if v.pass { 0 } else { EXIT_VERIFY_FAIL };
    Ok(out.finish(code, format!("distance {:.3e}, bound {:.3e}: {}", v.distance, v.bound, if v.pass { "pass" } else { "FAIL" })))
}

/// Learns a classical distribution and checks the generated one.
pub fn classical_cmd(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let lat = cfg.lattice.build()?;
    let p = classical_target(cfg, &lat)?;
    let budget = make_budget(cfg.epsilon, lat.n, 1, cfg.width)?;
    let plan = build_covering(&lat, cfg.width, cfg.patch)?;
    let source = match cfg.shots {
        None => ClassicalSource::Exact(p.clone()),
        Some(m) => ClassicalSource::Counts(p.sample_counts(m, cfg.seed)?),
    };
    let (w, mut report) = learn_classical(&source, &lat, &budget, &plan)?;
    let mut out = Artifacts::new(&cfg.out)?;
    let mut code = 0;
    let msg = if report.flag == Flag::Success {
        let v = verify_classical(&w, &p, &budget)?;
        report.total_distance = Some(v.tv);
        out.text("classical_circuit.json", &w.to_json()?)?;
        out.json("verification.json", &v)?;
        if !v.pass {
            code = EXIT_VERIFY_FAIL;
        }
        format!("Success: {} maps, total variation {:.3e} (bound {:.3e})", w.map_count(), v.tv, v.bound)
    } else {
        code = EXIT_LEARN_FAIL;
        let s = report.witness().expect("a failing step");
        format!("Fail at step {} ({:?}) on patch {:?}", s.step, s.kind, s.patch)
    };
    write_report(&mut out, &report)?;
    Ok(out.finish(code, msg))
}

/// Reloads a classical circuit written by [`classical_cmd`].
pub fn load_classical_circuit(path: &Path) -> Result<ClassicalCircuit> {
    ClassicalCircuit::from_json(&fs::read_to_string(path)?)
}

/// Runs the structural checks and writes a pass/fail table.
pub fn theorem_check(seed: u64, out_dir: &Path) -> Result<RunOutcome> {
    let outcomes = theorem_suite(seed);
    let mut out = Artifacts::new(out_dir)?;
    out.text("theorem_check.csv", &outcomes_csv(&outcomes)?)?;
    let lines: Vec<String> = outcomes.iter().map(|o| o.line()).collect();
    let code = if outcomes.iter().all(|o| o.pass) { 0 } else { EXIT_VERIFY_FAIL };
    Ok(out.finish(code, lines.join("\n")))
}
