use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use trivphase::cli::ExperimentConfig;
use trivphase::factory::ReversiblePreparation;
use trivphase::io::read_json;
use trivphase::pipeline::GenerationCircuit;

fn trivphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trivphase")).args(args).env("TRIVPHASE_THREADS", "2").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn learn_on_a_unitary_target_succeeds_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"lattice": {"l": 6}, "target": {"kind": "unitary", "depth": 1}, "epsilon": 0.1, "learner": "PetzBaseline", "seed": 3}"#,
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = trivphase(&["learn", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["circuit.json", "report.json", "report.txt", "steps.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let w = GenerationCircuit::from_json(&fs::read_to_string(a.join("circuit.json")).unwrap()).unwrap();
    assert_eq!(w.to_json().unwrap(), fs::read_to_string(a.join("circuit.json")).unwrap());

    let o = trivphase(&["verify", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(a.join("verification.json").is_file());
}

#[test]
fn prepared_targets_round_trip_into_learn() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"lattice": {"l": 6}, "target": {"kind": "noisy", "depth": 1, "noise": 0.05}, "epsilon": 0.1, "seed": 9}"#,
    );
    let out = dir.path().join("prep");
    let o = trivphase(&["prepare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let prep: ReversiblePreparation = read_json(&out.join("preparation.json")).unwrap();
    assert_eq!(prep.n(), 6);

    let body = format!(
        r#"{{"lattice": {{"l": 6}}, "target": {{"kind": "preparation", "path": {:?}}}, "epsilon": 0.1, "learner": "PetzBaseline"}}"#,
        out.join("preparation.json")
    );
    let cfg2 = dir.path().join("from_prep.json");
    fs::write(&cfg2, body).unwrap();
    let o = trivphase(&["learn", "--config", cfg2.to_str().unwrap(), "--out", dir.path().join("learned").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bell_target_exits_with_the_learner_fail_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"lattice": {"l": 8}, "target": {"kind": "bell"}, "epsilon": 0.1, "learner": "PetzBaseline"}"#,
    );
    let out = dir.path().join("bell");
    let o = trivphase(&["learn", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("report.json").is_file());
    assert!(!out.join("circuit.json").exists());
}

#[test]
fn missing_files_exit_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = trivphase(&["learn", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));

    let cfg = write_config(
        dir.path(),
        r#"{"lattice": {"l": 4}, "target": {"kind": "state_file", "path": "/does/not/exist.json"}, "epsilon": 0.1}"#,
    );
    let o = trivphase(&["learn", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
}

#[test]
fn bad_epsilon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"lattice": {"l": 4}, "target": {"kind": "unitary", "depth": 1}, "epsilon": 3.0}"#);
    assert_eq!(trivphase(&["prepare", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(dir.path(), r#"{"lattice": {"l": 4}, "target": {"kind": "unitary", "depth": 1}, "epsilon": 0.1}"#);
    let out = dir.path().join("o");
    assert_eq!(trivphase(&["prepare", "--config", &cfg, "--epsilon", "0", "--out", out.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn classical_command_learns_a_segmented_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"lattice": {"l": 10}, "target": {"kind": "markov_chain", "q": 2, "segment": 3}, "epsilon": 0.1, "seed": 4}"#,
    );
    let out = dir.path().join("cl");
    let o = trivphase(&["classical", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let w = trivphase::cli::load_classical_circuit(&out.join("classical_circuit.json")).unwrap();
    assert_eq!(w.layers.len(), 2);
    assert_eq!(w.to_json().unwrap(), fs::read_to_string(out.join("classical_circuit.json")).unwrap());
}

#[test]
fn configs_round_trip() {
    let text = r#"{"lattice": {"l": 6}, "target": {"kind": "ising", "beta": 0.5, "h": 0.1}, "epsilon": 0.2, "shots": 1000}"#;
    let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg, back);
    assert_eq!(cfg.shots, Some(1000));
    assert!(serde_json::from_str::<ExperimentConfig>(r#"{"lattice": {"l": 6}, "target": {"kind": "bell"}, "epsilon": 0.2, "typo": 1}"#).is_err());
}
