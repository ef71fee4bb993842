//! Command-line front end: `run` executes a scenario file, `validate` is
//! the dry run, `analyze` computes KPI CSVs from a results directory.
//!
//! Exit codes: 0 success, 1 validation/semantic failure, 2 syntax or
//! missing-file failure, 3 runtime failure.

use clap::{Parser, Subcommand};
use iodsim::analysis::{analyze, AnalyzeOptions, Kpi};
use iodsim::config::{parse_scenario, ParseError, ScenarioConfig};
use iodsim::scenario::execute_to_dir;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "iodsim",
    version,
    about = "Internet-of-Drones discrete-event simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and write reports, traces and captures.
    Run {
        /// Path to the JSON scenario.
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulation duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Validate only; write nothing.
        #[arg(long)]
        dry_run: bool,
        /// Suppress the per-second progress lines on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and semantically validate a scenario file (dry run).
    Validate { scenario: PathBuf },
    /// Compute a KPI CSV from a results directory.
    Analyze {
        /// Results directory produced by `run`.
        results: PathBuf,
        /// One of: power, rssi, throughput, storage, latency, plr, perf.
        #[arg(long)]
        kpi: String,
        /// Throughput window in seconds.
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}


/// stdout print that tolerates a closed pipe (`iodsim run | head`).
fn say(line: String) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn load_config(path: &PathBuf) -> Result<(ScenarioConfig, Vec<iodsim::config::Issue>), ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(2));
        }
    };
    match parse_scenario(&text) {
        Ok(parsed) => Ok(parsed),
        Err(ParseError::Syntax {
            line,
            column,
            message,
        }) => {
            eprintln!("error: {}:{line}:{column}: {message}", path.display());
            Err(ExitCode::from(2))
        }
        Err(ParseError::Invalid(report)) => {
            eprint!("{report}");
            Err(ExitCode::from(1))
        }
    }
}

fn cmd_run(
    scenario: PathBuf,
    seed: Option<u64>,
    duration: Option<f64>,
    dry_run: bool,
    quiet: bool,
) -> ExitCode {
    let (mut cfg, warnings) = match load_config(&scenario) {
        Ok(v) => v,
        Err(code) => return code,
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(duration) = duration {
        cfg.duration = duration;
    }
    if dry_run || cfg.dry_run {
        println!(
            "scenario '{}' is valid ({} warnings)",
            cfg.name,
            warnings.len()
        );
        return ExitCode::SUCCESS;
    }
    let results_dir = PathBuf::from(&cfg.results_path);
    match execute_to_dir(&cfg, &results_dir, quiet) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            say(format!(
                "scenario '{}' finished: {} events in {:.3} s wall, {} files under {}",
                cfg.name,
                summary.stats.events_processed,
                summary.stats.wall_seconds,
                summary.files.len(),
                results_dir.display()
            ));
            ExitCode::SUCCESS
        }
        Err(iodsim::scenario::ExecError::Build(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn cmd_validate(scenario: PathBuf) -> ExitCode {
    let (cfg, warnings) = match load_config(&scenario) {
        Ok(v) => v,
        Err(code) => return code,
    };
    for w in &warnings {
        println!("warning: {w}");
    }
    println!(
        "scenario '{}' is valid ({} warnings)",
        cfg.name,
        warnings.len()
    );
    ExitCode::SUCCESS
}

fn cmd_analyze(results: PathBuf, kpi: String, window: f64, out: Option<PathBuf>) -> ExitCode {
    let kpi: Kpi = match kpi.parse() {
        Ok(k) => k,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match analyze(&results, kpi, &AnalyzeOptions { window_s: window }) {
        Ok(csv) => match out {
            Some(path) => {
                if let Err(e) = std::fs::write(&path, csv) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(3);
                }
                ExitCode::SUCCESS
            }
            None => {
                // tolerate closed pipes from `head` and friends
                use std::io::Write;
                let _ = std::io::stdout().write_all(csv.as_bytes());
                ExitCode::SUCCESS
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            duration,
            dry_run,
            quiet,
        } => cmd_run(scenario, seed, duration, dry_run, quiet),
        Command::Validate { scenario } => cmd_validate(scenario),
        Command::Analyze {
            results,
            kpi,
            window,
            out,
        } => cmd_analyze(results, kpi, window, out),
    }
}
