use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nosb::run::{self, RunConfig};

#[derive(Parser)]
#[command(name = "nosb", version, about = "Optimal stopping boundaries: simulation, oracles, training and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-date path statistics.
    Simulate(Common),
    /// Lattice price and exercise boundary.
    Oracle(Common),
    /// Train a neural boundary and evaluate it out of sample.
    Train(Common),
    /// Distances and moduli between boundary files.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Boundary files (tabular CSV or network parameter files).
        boundaries: Vec<PathBuf>,
    },
    /// Fuzzy-width and path-count sweeps for a fixed boundary.
    ConvergenceStudy(Common),
}

fn load(c: &Common) -> nosb::Result<(RunConfig, PathBuf)> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    let cfg = cfg.resolve()?;
    let out = cfg.out_dir.clone();
    Ok((cfg, out))
}

fn init_threads() -> nosb::Result<()> {
    let Ok(v) = std::env::var("NOSB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| nosb::Error::Config(format!("NOSB_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| nosb::Error::Config(e.to_string()))
}

fn dispatch(cli: Cli) -> nosb::Result<run::RunSummary> {
    init_threads()?;
    match cli.command {
        Command::Simulate(c) => load(&c).and_then(|(cfg, out)| run::cmd_simulate(&cfg, &out)),
        Command::Oracle(c) => load(&c).and_then(|(cfg, out)| run::cmd_oracle(&cfg, &out)),
        Command::Train(c) => load(&c).and_then(|(cfg, out)| run::cmd_train(&cfg, &out)),
        Command::Metrics { common, boundaries } => {
            load(&common).and_then(|(cfg, out)| run::cmd_metrics(&cfg, &boundaries, &out))
        }
        Command::ConvergenceStudy(c) => load(&c).and_then(|(cfg, out)| run::cmd_convergence_study(&cfg, &out)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(summary) => {
            for (k, v) in &summary.headline {
                println!("{k} = {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
