use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use driftwise::cli::{run, verify, Experiment, RunConfig};

#[derive(Parser)]
#[command(name = "driftwise", version, about = "Streaming permutation feature importance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// A, B, C, theory-bias or theory-variance.
        #[arg(long)]
        experiment: Option<Experiment>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override any config key, e.g. `--set alpha=0.01 --set drift.position=5000`.
        #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
        overrides: Vec<(String, String)>,
    },
    /// Check the analytic oracles; exits nonzero if any check fails.
    Verify,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            experiment,
            seed,
            out,
            mut overrides,
        } => {
            if let Some(e) = experiment {
                overrides.push(("experiment".into(), format!("\"{e}\"")));
            }
            if let Some(s) = seed {
                overrides.push(("seed".into(), s.to_string()));
            }
            if let Some(o) = out {
                let path = toml::Value::String(o.display().to_string());
                overrides.push(("output".into(), path.to_string()));
            }
            let cfg = RunConfig::load(&config, &overrides)
                .with_context(|| format!("loading {}", config.display()))?;
            let outcome = run(&cfg)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let checks = verify();
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
