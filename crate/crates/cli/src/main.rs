//! `pfotoc`: OTOC light cones of Z3 parafermion chains from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures (partial results are kept and `metadata.json` is marked
//! `FAILED`).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use parafermion_otoc::otoc::Method;

use crate::commands::Failure;
use crate::config::{Command, Overrides, RunConfig};
use crate::output::Metadata;

#[derive(Parser)]
#[command(name = "pfotoc", version, about = "OTOCs of Z3 parafermion chains")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML file with one section per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximal bond dimension.
    #[arg(long, global = true)]
    chi: Option<usize>,
    /// Trotter step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long, global = true)]
    tmax: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// direct, timesplit or ed.
    #[arg(long, global = true)]
    method: Option<Method>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// One OTOC series F_{j,k}(t).
    Otoc,
    /// Re F_{j,k}(t) for a scan of targets.
    Lightcone,
    /// Butterfly velocities across a parameter sweep.
    Butterfly,
    /// Level-spacing statistics of one parity sector.
    Levels,
    /// Boundary OTOCs of the alternating chain.
    Zeromode,
    /// MPO against exact dynamics on small chains.
    BenchEd,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Otoc => Command::Otoc,
            Sub::Lightcone => Command::Lightcone,
            Sub::Butterfly => Command::Butterfly,
            Sub::Levels => Command::Levels,
            Sub::Zeromode => Command::Zeromode,
            Sub::BenchEd => Command::BenchEd,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let overrides = Overrides {
        out: cli.out,
        chi: cli.chi,
        dt: cli.dt,
        t_max: cli.tmax,
        workers: cli.workers,
        method: cli.method,
    };
    let cfg = match RunConfig::load(cli.config.as_deref(), command) {
        Ok(mut c) => {
            c.apply(&overrides);
            c
        }
        Err(e) => {
            eprintln!("pfotoc: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = cfg.validate(command) {
        eprintln!("pfotoc: invalid configuration: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = std::fs::create_dir_all(&cfg.out) {
        eprintln!("pfotoc: cannot create {}: {e}", cfg.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("pfotoc: cannot start {} workers: {e}", cfg.workers);
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let start = Instant::now();
    let mut meta = Metadata::new(command, &cfg);
    let outcome = pool.install(|| commands::dispatch(command, &cfg, &mut meta));
    if let Err(e) = &outcome {
        meta.failure = Some(e.to_string());
    }
    if let Err(e) = meta.write(start.elapsed().as_secs_f64()) {
        eprintln!("pfotoc: cannot write metadata: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfotoc: {e}");
            ExitCode::from(match e {
                Failure::Config(_) => EXIT_CONFIG,
                Failure::Numerical(_) | Failure::Io(_) => EXIT_NUMERICAL,
            })
        }
    }
}
