//! Command-line entry point: scenario runs, bundled examples, plot data.
//!
//! Exit codes: 0 when every golden check passed, 1 when a task failed or
//! aborted, 2 for usage and parse errors.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use moyal_cli::report::Report;
use moyal_cli::runner::{run_scenario, RunOptions};
use moyal_cli::scenario::{Scenario, Task, TaskSpec};

#[derive(Parser)]
#[command(
    name = "moyal",
    version,
    about = "Star products, canonical transformations and their unitary kernels"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and emit a JSON report.
    Run {
        /// Scenario JSON file.
        file: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario truncation order.
        #[arg(long)]
        k: Option<u16>,
        /// Recorded in the report for reproducibility.
        #[arg(long)]
        seed: Option<u64>,
        /// Attach per-task wall-clock times (breaks byte-identical output).
        #[arg(long)]
        timings: bool,
    },
    /// Run a bundled example by id and print its report.
    Example {
        /// One of: 5.1, 5.2, 5.3, 5.4, intro-oscillator.
        id: String,
    },
    /// Print CSV plot data for one task of a report file.
    Plot {
        /// Report JSON file produced by `run` or `example`.
        report: PathBuf,
        /// Task id inside the report.
        task_id: String,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> moyal_cli::Result<ExitCode> {
    match cli.cmd {
        Cmd::Run {
            file,
            out,
            k,
            seed,
            timings,
        } => {
            let src = std::fs::read_to_string(&file)?;
            let sc = Scenario::from_json(&src)?;
            let opts = RunOptions {
                k,
                seed: seed.unwrap_or(0),
                timings,
            };
            let report = run_scenario(&sc, &opts)?;
            emit(&report, out.as_deref())
        }
        Cmd::Example { id } => {
            if !moyal_cli::examples::EXAMPLE_IDS.contains(&id.as_str()) {
                return Err(moyal_cli::CliError::Scenario(format!(
                    "unknown example id '{id}'; known ids: {}",
                    moyal_cli::examples::EXAMPLE_IDS.join(", ")
                )));
            }
            let sc = Scenario {
                name: format!("example-{id}"),
                k: 4,
                bindings: Default::default(),
                tasks: vec![Task {
                    label: Some(id.clone()),
                    spec: TaskSpec::Example { id },
                }],
            };
            let report = run_scenario(&sc, &RunOptions::default())?;
            emit(&report, None)
        }
        Cmd::Plot { report, task_id } => {
            let src = std::fs::read_to_string(&report)?;
            let rep = Report::from_json(&src)?;
            let task = rep.find_task(&task_id).ok_or_else(|| {
                moyal_cli::CliError::Scenario(format!("no task '{task_id}' in the report"))
            })?;
            let payload = task.grid.as_ref().ok_or_else(|| {
                moyal_cli::CliError::Scenario(format!("task '{task_id}' has no grid output"))
            })?;
            print!("{}", payload.to_csv());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn emit(report: &Report, out: Option<&Path>) -> moyal_cli::Result<ExitCode> {
    let json = report.to_json()?;
    match out {
        Some(path) => std::fs::write(path, &json)?,
        None => print!("{json}"),
    }
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
