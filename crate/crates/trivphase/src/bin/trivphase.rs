use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trivphase::cli::{self, ExperimentConfig, RunOutcome, EXIT_CONFIG};
use trivphase::pipeline::Learner;

#[derive(Parser)]
#[command(name = "trivphase", version, about = "Learn shallow generation circuits for trivial-phase states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and certify a target preparation.
    Prepare(Common),
    /// Learn a generation circuit from marginals.
    Learn(Common),
    /// Recompute the distance of a learned circuit from the target.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Circuit to check (default: <out>/circuit.json).
        #[arg(long)]
        circuit: Option<PathBuf>,
    },
    /// Learn a classical distribution from exact tables or samples.
    Classical(Common),
    /// Run the structural property checks and write a pass/fail table.
    TheoremCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Shot count; overrides the config.
    #[arg(long, conflicts_with = "exact")]
    shots: Option<u64>,
    /// Use exact marginals even if the config gives a shot count.
    #[arg(long)]
    exact: bool,
    #[arg(long, value_parser = parse_learner)]
    learner: Option<Learner>,
}

fn parse_learner(s: &str) -> Result<Learner, String> {
    match s {
        "sdp" => Ok(Learner::Sdp),
        "petz" => Ok(Learner::PetzBaseline),
        "conditional" => Ok(Learner::Conditional),
        _ => Err(format!("unknown learner {s:?} (sdp, petz, conditional)")),
    }
}

impl Common {
    fn load(&self) -> trivphase::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(m) = self.shots {
            cfg.shots = Some(m);
        }
        if self.exact {
            cfg.shots = None;
        }
        if let Some(l) = self.learner {
            cfg.learner = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<RunOutcome, (i32, String)> {
    let config_err = |e: trivphase::Error| (EXIT_CONFIG, e.to_string());
    match command {
        Command::Prepare(c) => cli::prepare(&c.load().map_err(config_err)?),
        Command::Learn(c) => cli::learn_cmd(&c.load().map_err(config_err)?),
        Command::Verify { common, circuit } => {
            let cfg = common.load().map_err(config_err)?;
            let circuit = circuit.unwrap_or_else(|| cfg.out.join("circuit.json"));
            cli::verify_cmd(&cfg, &circuit)
        }
        Command::Classical(c) => cli::classical_cmd(&c.load().map_err(config_err)?),
        Command::TheoremCheck { seed, out } => cli::theorem_check(seed, &out),
    }
    .map_err(config_err)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.command) {
        Ok(out) => {
            println!("{}", out.message);
            for p in &out.artifacts {
                println!("wrote {}", p.display());
            }
            ExitCode::from(out.code as u8)
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
