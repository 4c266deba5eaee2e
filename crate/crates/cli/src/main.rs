use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rwre_cli::commands::OBSERVATIONS;
use rwre_cli::{cmd_experiment, cmd_reconstruct, cmd_simulate, cmd_verify, RunConfig, UnknownCheck};
use rwre_core::estimator::ModeRequest;

#[derive(Parser)]
#[command(name = "rwre", version, about = "Random walk in random environment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write observations.bin and manifest.json.
    Simulate(Common),
    /// Reconstruct the law from an observation file.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Observation file; defaults to observations.bin in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run verification checks; exits nonzero if any fails.
    Verify(Common),
    /// Simulate, reconstruct and compare over replicas.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    mode: Option<ModeRequest>,
    #[arg(long)]
    ground_truth: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        cfg.ground_truth |= self.ground_truth;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(c) => {
            let m = cmd_simulate(&c.load()?)?;
            println!("wrote {} values, sha256 {}", m.length, m.observations_sha256);
        }
        Command::Reconstruct { common, input } => {
            let cfg = common.load()?;
            let input = input.unwrap_or_else(|| cfg.out.join(OBSERVATIONS));
            let r = cmd_reconstruct(&input, &cfg).with_context(|| format!("reconstructing {}", input.display()))?;
            print_json(&r.reconstruction)?;
        }
        Command::Verify(c) => {
            let report = cmd_verify(&c.load()?)?;
            for check in &report.checks {
                println!("{} {} ({} ms)", if check.passed { "PASS" } else { "FAIL" }, check.name, check.elapsed_ms);
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Experiment(c) => {
            let report = cmd_experiment(&c.load()?)?;
            print_json(&report)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UnknownCheck>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
