use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmsca_core::scenario::Scenario;
use tmsca_core::telemetry::{self, Report, TelemetryError};

mod serve;

/// Beacon-driven traffic control simulator.
#[derive(Debug, Parser)]
#[command(name = "tmsca", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check a scenario file without running it.
    Validate { path: PathBuf },
    /// Run a scenario to completion.
    Run {
        path: PathBuf,
        /// Write the event log (newline-delimited JSON) here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the combined compliance and preemption report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recompute reports from a persisted event log.
    Report {
        logpath: PathBuf,
        /// Print the JSON report instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario in real time and serve the driver console channel.
    Serve {
        path: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Where the event log is written on shutdown.
        #[arg(long, default_value = "tmsca-serve.ndjson")]
        log: PathBuf,
    },
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input or failed validation: exit 2.
    Input(String),
    /// Environment or I/O failure: exit 3.
    Env(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Env(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Env(m) => f.write_str(m),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_outputs(
    log: &[tmsca_core::SimEvent],
    log_path: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<Report, CliError> {
    if let Some(path) = log_path {
        telemetry::persist(log, path).map_err(|e| match e {
            TelemetryError::Io { .. } => CliError::Env(e.to_string()),
            other => CliError::Input(other.to_string()),
        })?;
    }
    let report = telemetry::report(log);
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, json + "\n")
            .map_err(|e| CliError::Env(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}

fn validate(path: &Path) -> Result<(), CliError> {
    let s = load_scenario(path)?;
    println!(
        "ok: {} signboards ({} with lights), {} vehicles ({} drivable), {} steps of {} s",
        s.signboards.len(),
        s.signboards.iter().filter(|b| b.has_light()).count(),
        s.vehicles.len(),
        s.drivable.len(),
        s.steps(),
        s.dt_s
    );
    Ok(())
}

fn run(path: &Path, log: Option<&Path>, report: Option<&Path>) -> Result<(), CliError> {
    let scenario = load_scenario(path)?;
    log::info!("running {} steps", scenario.steps());
    let outcome = tmsca_core::run(&scenario);
    log::info!("{} events", outcome.log.len());
    let report = write_outputs(outcome.log.events(), log, report)?;
    print!("{}", telemetry::render_text(&report));
    Ok(())
}

fn report(path: &Path, json: bool) -> Result<(), CliError> {
    let events = telemetry::load(path).map_err(|e| match e {
        TelemetryError::Io { .. } => CliError::Input(e.to_string()),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })?;
    let report = telemetry::report(&events);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        print!("{}", telemetry::render_text(&report));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("TMSCA_LOG_LEVEL", "warn")
            .write_style("TMSCA_LOG_STYLE"),
    )
    .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Validate { path } => validate(path),
        Cmd::Run { path, log, report } => run(path, log.as_deref(), report.as_deref()),
        Cmd::Report { logpath, json } => report(logpath, *json),
        Cmd::Serve { path, listen, log } => serve::serve(path, listen, log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
