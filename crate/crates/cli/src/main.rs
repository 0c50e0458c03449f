//! `ramping`: extract ramping events from irradiance data, fit the
//! spatio-temporal model, certify it and predict.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::Settings;

#[derive(Parser)]
#[command(name = "ramping", version, about = "Solar ramping-event modelling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn irradiance series into an event CSV.
    Extract(Settings),
    /// Draw events from a parameter file.
    Simulate(Settings),
    /// Fit the model to an event CSV; writes the report, params and graph.
    Fit(Settings),
    /// Sequential prediction with tuned thresholds; writes records and metrics.
    Predict(Settings),
    /// Condition numbers and error bounds for an event CSV or given thetas.
    Bound(Settings),
    /// Frequency-test MSE over a grid of extraction levels.
    SweepDelta(Settings),
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("RAMPING_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("RAMPING_WORKERS must be a positive integer, got `{v}`")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (settings, run): (Settings, fn(&Settings) -> ramping::Result<Outcome>) = match cli.command {
        Command::Extract(s) => (s, commands::extract),
        Command::Simulate(s) => (s, commands::simulate_cmd),
        Command::Fit(s) => (s, commands::fit_cmd),
        Command::Predict(s) => (s, commands::predict_cmd),
        Command::Bound(s) => (s, commands::bound_cmd),
        Command::SweepDelta(s) => (s, commands::sweep_cmd),
    };
    let settings = match settings.resolve() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match workers(settings.workers) {
        Ok(Some(0)) | Err(_) => {
            eprintln!("error: the worker count must be a positive integer");
            return ExitCode::from(2);
        }
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
    }
    match run(&settings) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("error: {msg}; partial outputs were written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
