use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhfermion::scaling::Geometry;
use nhfermion_cli::commands::{self, Context};
use nhfermion_cli::config::{self, parse_tolerance};
use nhfermion_cli::error::CliError;

#[derive(Parser)]
#[command(name = "nhfermion", version, about = "Entanglement diagnostics for free-fermion lattice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `[output] dir`; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Tolerance override, repeatable.
    #[arg(long = "tolerance", value_name = "NAME=VALUE", global = true, value_parser = parse_tolerance)]
    tolerances: Vec<(String, f64)>,
}

#[derive(Subcommand)]
enum Command {
    /// List model families and their parameters.
    ModelList,
    /// Entanglement spectra and entropies over a parameter sweep.
    Entanglement {
        #[arg(long)]
        config: PathBuf,
    },
    /// Central-charge fits of entropy series files.
    Fit {
        #[arg(long = "series", required = true)]
        series: Vec<PathBuf>,
        #[arg(long, default_value = "chord")]
        geometry: Geometry,
        /// Inclusive fit window `LO,HI` in cells.
        #[arg(long, value_parser = parse_window)]
        window: Option<(usize, usize)>,
    },
    /// No-jump dynamics time series.
    Dynamics {
        #[arg(long)]
        config: PathBuf,
    },
    /// RPR / PRP spectrum comparison.
    Duality {
        #[arg(long)]
        config: PathBuf,
    },
    /// Many-body cross-check; without a config, runs the default suite.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = a.trim().parse().map_err(|_| format!("bad LO `{a}`"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad HI `{b}`"))?;
    Ok((lo, hi))
}

/// OpenBLAS picks its kernels when the library loads, so the override has
/// to be in the environment before the process starts.
#[cfg(unix)]
fn ensure_blas_coretype() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    let Ok(exe) = std::env::current_exe() else { return };
    let err = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env("OPENBLAS_CORETYPE", "Haswell")
        .exec();
    eprintln!("warning: could not re-exec with OPENBLAS_CORETYPE set: {err}");
}

#[cfg(not(unix))]
fn ensure_blas_coretype() {}

fn run(cli: Cli) -> Result<i32, CliError> {
    let ctx = Context { out: cli.out, workers: cli.workers, overrides: cli.tolerances };
    match cli.command {
        Command::ModelList => {
            print!("{}", commands::model_list());
            Ok(0)
        }
        Command::Entanglement { config } => commands::cmd_entanglement(&config::load(&config)?, &ctx),
        Command::Fit { series, geometry, window } => commands::cmd_fit(&series, geometry, window, &ctx),
        Command::Dynamics { config } => commands::cmd_dynamics(&config::load(&config)?, &ctx),
        Command::Duality { config } => commands::cmd_duality(&config::load(&config)?, &ctx),
        Command::Oracle { config } => {
            let loaded = config.map(|p| config::load(&p)).transpose()?;
            commands::cmd_oracle(loaded.as_ref(), &ctx)
        }
    }
}

fn main() -> ExitCode {
    ensure_blas_coretype();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
