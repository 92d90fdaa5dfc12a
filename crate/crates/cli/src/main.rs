use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use cutfem_cli::{run, ExperimentConfig, ExperimentKind};

/// Run a CutFEM optimal control experiment from a TOML config.
#[derive(Parser, Debug)]
#[command(name = "cutfem", version)]
struct Args {
    /// Experiment config file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override the experiment kind of the config.
    #[arg(short, long, value_enum)]
    experiment: Option<ExperimentKind>,
    /// Output directory (default: `output` from the config, else `results`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override every random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sampling (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match try_main() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            log::error!("{failures} computations failed; see run.json");
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> Result<usize> {
    let args = Args::parse();
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(kind) = args.experiment {
        cfg.experiment = kind;
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let out = args
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let failures = run(&cfg, &out)?;
    log::info!("wrote {}", out.display());
    Ok(failures)
}
