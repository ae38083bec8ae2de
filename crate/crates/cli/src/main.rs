//! Command-line front end: scenario runs, sweeps, the chamber model and
//! re-analysis of stored series.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use planckdiff::Error;

use crate::commands::{cmd_analyze, cmd_run, cmd_sweep, cmd_thouless, parse_window, AnalyzeArgs};
use crate::config::{load, Source};

#[derive(Parser)]
#[command(name = "planckdiff", version, about = "Wavepacket diffusion in dynamic disorder")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "PLANCKDIFF_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (a JSON run manifest is also accepted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled configuration by name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; ensemble seeds become seed, seed+1, ...
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Large grid (512², 256 nm) and 200 ps runs.
    #[arg(long)]
    extended: bool,
}

impl Common {
    fn source(&self) -> Source<'_> {
        Source {
            path: self.config.as_deref(),
            preset: self.preset.as_deref(),
            overrides: &self.overrides,
            extended: self.extended,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario over its seed ensemble.
    Run(Common),
    /// Run a scenario once per value of a swept parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides `sweep.parameter`.
        #[arg(long)]
        param: Option<String>,
        /// Overrides `sweep.values`, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Chamber random-walk model against its closed form.
    Thouless(Common),
    /// Re-fit stored series; several files are averaged as an ensemble.
    Analyze {
        files: Vec<PathBuf>,
        /// `last:<fraction>` or `<start>:<end>` in fs.
        #[arg(long, default_value = "last:0.5")]
        window: String,
        /// Sliding-window width for D(t), fs.
        #[arg(long, default_value_t = 1000.0)]
        width: f64,
        /// Carrier mass in multiples of m_e.
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } => 2,
        Error::Numerical { .. } => 3,
        Error::Estimation(_) => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::config("--workers", "must be ≥ 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("--workers", e.to_string()))?;
    }
    match &cli.command {
        Command::Run(c) => {
            let cfg = load(&c.source())?;
            cmd_run(&cfg, &c.out, c.seed)
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = load(&common.source())?;
            cmd_sweep(&cfg, &common.out, common.seed, param.as_deref(), values.as_deref())
        }
        Command::Thouless(c) => {
            let cfg = load(&c.source())?;
            cmd_thouless(&cfg, &c.out)
        }
        Command::Analyze {
            files,
            window,
            width,
            mass,
            out,
        } => cmd_analyze(&AnalyzeArgs {
            files,
            window: parse_window(window)?,
            width: *width,
            mass: *mass,
            out: out.as_deref(),
        })
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
