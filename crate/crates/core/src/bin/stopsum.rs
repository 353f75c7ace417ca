use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stopsum::harness::Executor;
use stopsum::report::{run_experiment, ConfigLayer, ExperimentConfig};
use stopsum::Error;

/// Monte-Carlo checks of normal approximation for stopped martingale sums.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on
/// configuration or I/O errors. Set STOPSUM_WORKERS to fix the worker count;
/// it never changes the output.
#[derive(Parser, Debug)]
#[command(name = "stopsum", version)]
struct Cli {
    /// Flat TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model, e.g. `iid_bounded:m=1,v=1`, `product:a_lo=1,a_hi=2,jump_prob=0.05`
    /// or `regime_switch:v_lo=0.25,v_hi=4`.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated, strictly increasing levels.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<f64>>,
    /// Replications per level.
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// DKW confidence parameter.
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated subset of distance, cf, lemma1, esseen, rate.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Main report path; sidecar CSVs are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

fn run(cli: Cli) -> Result<i32, Error> {
    let base = match &cli.config {
        Some(path) => ConfigLayer::load(path)?,
        None => ConfigLayer::default(),
    };
    let flags = ConfigLayer {
        model: cli.model,
        n_list: cli.n_list,
        reps: cli.reps,
        seed: cli.seed,
        delta: cli.delta,
        checks: cli.checks,
        out: cli.out,
        format: cli.format,
    };
    let cfg = ExperimentConfig::from_layer(base.overlay(flags))?;
    let exec = Executor::from_env()?;
    let outcome = exec.install(|| run_experiment(&cfg))?;
    for rec in outcome.failures() {
        eprintln!("FAIL {rec}");
    }
    for path in &outcome.files {
        println!("{}", path.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("stopsum: {e}");
            ExitCode::from(2)
        }
    }
}
