//! Drives the command layer from an in-memory config: prepare, learn and
//! verify, writing artifacts to a temporary directory.

use trivphase::cli::{learn_cmd, prepare, verify_cmd, ExperimentConfig};

fn main() -> trivphase::Result<()> {
    let dir = tempfile::tempdir()?;
    let text = format!(
        r#"{{"lattice": {{"l": 6}}, "target": {{"kind": "noisy", "depth": 1, "noise": 0.1}},
            "epsilon": 0.1, "learner": "PetzBaseline", "seed": 2, "out": {:?}}}"#,
        dir.path()
    );
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    for outcome in [prepare(&cfg)?, learn_cmd(&cfg)?, verify_cmd(&cfg, &dir.path().join("circuit.json"))?] {
        println!("exit {}: {}", outcome.code, outcome.message);
        for a in &outcome.artifacts {
            println!("  wrote {}", a.file_name().unwrap().to_string_lossy());
        }
    }
    println!("{}", std::fs::read_to_string(dir.path().join("report.txt"))?);
    Ok(())
}
