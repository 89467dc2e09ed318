//! `albedo-lab`: run experiments, validate configurations, compare reports.

mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use albedo_lab::coefficients::{catalog, pair_catalog};
use albedo_lab::stability::{diff_reports, StabilityReport};
use albedo_lab::Error;
use clap::{Args, Parser, Subcommand};

use config::{env_overrides, load, ExperimentConfig};
use output::Outputs;

const EXIT_FAILED: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_GUARD: u8 = 3;

#[derive(Parser)]
#[command(
    name = "albedo-lab",
    version,
    about = "Forward solves, coefficient recovery and stability checks for time-dependent transport"
)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(Overrides),
    /// Load, override and validate a configuration without running it.
    ValidateConfig(Overrides),
    /// List built-in phantoms and phantom pairs.
    ListPhantoms,
    /// Compare two report JSON files row by row.
    DiffReports {
        first: PathBuf,
        second: PathBuf,
        /// Relative tolerance below which numbers are equal.
        #[arg(long, default_value_t = 1e-9)]
        relative: f64,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long)]
    pair: Option<String>,
}

fn resolve(o: &Overrides) -> Result<ExperimentConfig, String> {
    let text = match &o.config {
        Some(path) => {
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => String::new(),
    };
    let mut config = load(&text, &env_overrides(std::env::vars())).map_err(|e| e.to_string())?;
    if let Some(v) = &o.out {
        config.out = v.clone();
    }
    if let Some(v) = o.seed {
        config.seed = v;
    }
    if let Some(v) = &o.experiment {
        config.experiment = v.clone();
    }
    if let Some(v) = &o.phantom {
        config.phantom = v.clone();
    }
    if let Some(v) = &o.pair {
        config.pair = v.clone();
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::NumericalGuard(_) | Error::NonFinite(_) => EXIT_GUARD,
        _ => EXIT_FAILED,
    }
}

fn run(config: &ExperimentConfig) -> ExitCode {
    let mut out = match Outputs::create(&config.out, &config.hash()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("cannot create {}: {e}", config.out.display());
            return ExitCode::from(EXIT_FAILED);
        }
    };
    let result = experiments::run(config, &mut out).and_then(|done| {
        out.summary(&done.summary)?;
        out.manifest(&config.experiment, config.seed)?;
        Ok(done)
    });
    match result {
        Ok(done) => {
            println!(
                "experiment {} (config {})",
                config.experiment,
                config.hash()
            );
            for (k, v) in &done.summary {
                println!("  {k:<28} {v}");
            }
            println!("artifacts in {}", config.out.display());
            if done.failed_rows > 0 {
                eprintln!("{} inequality rows failed", done.failed_rows);
                return ExitCode::from(EXIT_FAILED);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            out.discard();
            eprintln!("experiment {} failed: {e}", config.experiment);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn list_phantoms() {
    println!("phantoms:");
    for p in catalog() {
        let class = p
            .class_m
            .map(|c| format!(" [class M = {}, r~ = {}]", c.bound, c.extra_smoothness))
            .unwrap_or_default();
        println!("  {:<24} {}  {}{class}", p.name, p.hash(), p.description);
    }
    println!("pairs:");
    for p in pair_catalog() {
        println!("  {:<24} {}", p.name, p.description);
    }
    println!(
        "  {:<24} Gaussian amplitudes scaled by 1 + <delta>",
        "gaussian-ladder-<delta>"
    );
}

fn diff(first: &Path, second: &Path, relative: f64) -> ExitCode {
    let load =
        |p: &Path| StabilityReport::read_json(p).map_err(|e| format!("{}: {e}", p.display()));
    let (a, b) = match (load(first), load(second)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match diff_reports(&a, &b, relative) {
        Ok(diffs) if diffs.is_empty() => {
            println!("no differences");
            ExitCode::SUCCESS
        }
        Ok(diffs) => {
            for d in &diffs {
                println!(
                    "row {} ({}) {}: {} -> {}",
                    d.row,
                    d.name,
                    d.field,
                    d.first.as_deref().unwrap_or("-"),
                    d.second.as_deref().unwrap_or("-")
                );
            }
            ExitCode::from(EXIT_FAILED)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0
            || rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_err()
        {
            eprintln!("--threads must be a positive count");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match cli.command {
        Command::Run(o) => match resolve(&o) {
            Ok(config) => run(&config),
            Err(e) => {
                eprint!("{e}");
                ExitCode::from(EXIT_VALIDATION)
            }
        },
        Command::ValidateConfig(o) => match resolve(&o) {
            Ok(config) => {
                println!("configuration valid (hash {})", config.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprint!("{e}");
                ExitCode::from(EXIT_VALIDATION)
            }
        },
        Command::ListPhantoms => {
            list_phantoms();
            ExitCode::SUCCESS
        }
        Command::DiffReports {
            first,
            second,
            relative,
        } => diff(&first, &second, relative),
    }
}
