//! Command line for running, analyzing and comparing formation-control
//! scenarios. Exit codes: 0 success, 1 configuration error, 2 runtime abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formsim::sim::{
    analyze, comparison_csv, compute_metrics, read_lyapunov_csv, run_scenario,
    ScenarioConfig, SimError, DEFAULT_V_THRESHOLD,
};

/// Environment variable overriding the default output root for `run`.
const OUT_DIR_ENV: &str = "FORMSIM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "formsim",
    version,
    about = "Leader-following formation control with online goal assignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv, lyapunov.csv,
    /// events.jsonl and metrics.json into the output directory.
    Run {
        scenario: PathBuf,
        /// Output directory. Defaults to runs/<name> (or -noassign), under
        /// $FORMSIM_OUT_DIR when that is set.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep every n-th logged step.
        #[arg(long, value_name = "N")]
        log_every: Option<usize>,
        /// Disable goal assignment (baseline run).
        #[arg(long)]
        no_assignment: bool,
    },
    /// Print the stability analysis of a scenario as one JSON document:
    /// spanning-tree verdict, estimator spectrum, Lyapunov residual.
    Analyze {
        scenario: PathBuf,
        /// Also write the JSON to a file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair the Lyapunov traces of two finished runs (baseline first)
    /// into a CSV with columns t, V_without, V_with.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Write the CSV to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run {
            scenario,
            out,
            log_every,
            no_assignment,
        } => cmd_run(&scenario, out, log_every, no_assignment),
        Command::Analyze { scenario, out } => cmd_analyze(&scenario, out),
        Command::Compare { run_a, run_b, out } => cmd_compare(&run_a, &run_b, out),
    };
    match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("runtime error: {message}");
            ExitCode::from(2)
        }
    }
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Config(e) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_config(err: std::io::Error, path: &Path) -> CliError {
    CliError::Config(format!("{}: {err}", path.display()))
}

fn cmd_run(
    scenario_path: &Path,
    out: Option<PathBuf>,
    log_every: Option<usize>,
    no_assignment: bool,
) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::load(scenario_path).map_err(SimError::Config)?;
    if let Some(n) = log_every {
        cfg.log_every = Some(n);
    }
    if no_assignment {
        cfg.assignment = None;
    }

    let out_dir = out.unwrap_or_else(|| {
        let root = std::env::var(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|_| PathBuf::from("runs"));
        let suffix = if no_assignment { "-noassign" } else { "" };
        root.join(format!("{}{suffix}", cfg.name))
    });

    let log = run_scenario(&cfg)?;
    let metrics = compute_metrics(&log, DEFAULT_V_THRESHOLD);
    log.write_outputs(&out_dir)
        .map_err(|e| io_config(e, &out_dir))?;
    let metrics_json = serde_json::to_string_pretty(&metrics)
        .expect("metrics serialize cleanly");
    fs::write(out_dir.join("metrics.json"), metrics_json + "\n")
        .map_err(|e| io_config(e, &out_dir))?;

    for warning in &log.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "{}: {} steps logged, {} proposals, {} exchanges, final V {:.6e} -> {}",
        cfg.name,
        log.steps.len(),
        metrics.proposal_count,
        metrics.exchange_count,
        log.steps.last().map_or(f64::NAN, |s| s.v),
        out_dir.display()
    );
    Ok(())
}

fn cmd_analyze(scenario_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ScenarioConfig::load(scenario_path).map_err(SimError::Config)?;
    let report = analyze(&cfg)?;
    let json =
        serde_json::to_string_pretty(&report).expect("report serializes cleanly");
    if let Some(path) = &out {
        fs::write(path, json.clone() + "\n").map_err(|e| io_config(e, path))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_compare(run_a: &Path, run_b: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let read = |dir: &Path| -> Result<Vec<(f64, f64)>, CliError> {
        let path = dir.join("lyapunov.csv");
        let text = fs::read_to_string(&path).map_err(|e| io_config(e, &path))?;
        read_lyapunov_csv(&text).map_err(CliError::Config)
    };
    let without = read(run_a)?;
    let with = read(run_b)?;
    let csv = comparison_csv(&without, &with).map_err(CliError::Config)?;
    match out {
        Some(path) => fs::write(&path, csv).map_err(|e| io_config(e, &path))?,
        None => print!("{csv}"),
    }
    Ok(())
}
