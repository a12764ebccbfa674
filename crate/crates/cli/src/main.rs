//! `kdvlab`: runs configured experiments and writes machine-readable reports.
//!
//! Exit status: 0 success, 1 I/O failure, 2 validation error, 3 numerical
//! abort, 4 failed invariant. A sweep exits with the largest status it saw.

mod config;
mod experiment;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kdvlab::coefficients::presets;
use rayon::prelude::*;

use config::ExperimentConfig;
use experiment::{RunError, EXIT_IO, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "kdvlab", version, about = "Numerical laboratory for linear third-order dispersive equations")]
struct Cli {
    /// Output directory. For `run` it replaces the config's `output`; for
    /// `sweep` each config writes to `<dir>/<config stem>`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run every `*.toml` config in a directory concurrently.
    Sweep { dir: PathBuf },
    /// List coefficient presets and the assumptions they exhibit.
    ListPresets,
}

const DEFAULT_ROOT: &str = "runs";

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into())
}

/// Runs one config into `dir` and returns the exit status.
fn execute(path: &Path, dir: Option<PathBuf>) -> i32 {
    let name = stem(path);
    let config = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("{name}: validation error: {message}");
            return EXIT_VALIDATION;
        }
    };
    let dir = dir
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new(DEFAULT_ROOT).join(&name));
    let outcome = match experiment::run(&config) {
        Ok(o) => o,
        Err(RunError { code, message }) => {
            eprintln!("{name}: {message}");
            return code;
        }
    };
    let coefficient_name = config.coefficient_set().map(|c| c.name).unwrap_or_default();
    let report = output::report(&config, &coefficient_name, &outcome);
    if let Err(e) = output::write_all(&dir, &report, &outcome) {
        eprintln!("{name}: cannot write artifacts to {}: {e}", dir.display());
        return EXIT_IO;
    }
    let verdict = outcome.verdict();
    if let Some(reason) = &outcome.abort {
        eprintln!("{name}: numerical abort, checks undecided: {reason}");
    } else {
        for c in outcome.failed_checks() {
            eprintln!("{name}: invariant {} violated: {} (limit {})", c.name, c.value, c.limit);
        }
    }
    println!("{name}: {verdict:?} -> {}", dir.display());
    verdict.exit_code()
}

fn sweep(dir: &Path, root: Option<PathBuf>) -> i32 {
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect(),
        Err(e) => {
            eprintln!("cannot read {}: {e}", dir.display());
            return EXIT_IO;
        }
    };
    configs.sort();
    let root = root.unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT));
    configs
        .par_iter()
        .map(|p| execute(p, Some(root.join(stem(p)))))
        .collect::<Vec<_>>()
        .into_iter()
        .max()
        .unwrap_or(0)
}

fn list_presets() {
    for p in presets() {
        println!("{:<26} {:<52} {}", p.name, p.description, p.assumptions);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("cannot configure {k} threads: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    let code = match &cli.command {
        Command::Run { config } => execute(config, cli.output.clone()),
        Command::Sweep { dir } => sweep(dir, cli.output.clone()),
        Command::ListPresets => {
            list_presets();
            0
        }
    };
    ExitCode::from(code as u8)
}
