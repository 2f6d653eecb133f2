//! `finitebath <scenario> --config path.json [--output-dir d] [--seed-override u64] [--threads n]`
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid config, 3 numerical error.

mod config;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use serde_json::json;

use config::{resolve, ConfigError, Scenario, ScenarioConfig};
use scenarios::Output;

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "finitebath", version, about = "Run a finite-bath master-equation scenario")]
struct Cli {
    scenario: Scenario,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config (default `out/<scenario>`).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads for rate-table and rate-matrix construction.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let started = Instant::now();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = ScenarioConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    let out_dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cli.scenario.name()));
    let resolved = resolve(cli.scenario, cfg, &cli.config)?;
    log::info!(
        "{}: N = {}, seed = {}, output in {}",
        cli.scenario.name(),
        resolved.bath.n_spins,
        resolved.config.seed,
        out_dir.display()
    );
    let mut out = Output::new(&out_dir)?;
    out.write("bath.json", |w| {
        use std::io::Write;
        writeln!(w, "{}", resolved.bath.to_json())
    })?;
    let results = scenarios::run(&resolved, &mut out)?;
    let metadata = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": cli.scenario.name(),
        "library_version": finitebath::VERSION,
        "cli_version": env!("CARGO_PKG_VERSION"),
        "prng_algorithm": finitebath::bath::PRNG_ALGORITHM,
        "seed": resolved.config.seed,
        "config_path": cli.config.display().to_string(),
        "config": resolved.config,
        "bath": {
            "n_spins": resolved.bath.n_spins,
            "zeeman": resolved.bath.zeeman,
            "couplings": resolved.bath.couplings,
            "sigma_n": resolved.bath.sigma_n(),
        },
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": out.files,
        "results": results,
    });
    let path = out_dir.join("metadata.json");
    std::fs::write(&path, serde_json::to_string_pretty(&metadata)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.downcast_ref::<ConfigError>().is_some() {
                2
            } else if e.downcast_ref::<finitebath::Error>().is_some() {
                3
            } else {
                1
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
