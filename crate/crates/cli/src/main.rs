//! `resokit` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use resokit::Error;

mod commands;
mod report;

/// Seed used by randomized commands when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20240611;

#[derive(Parser, Debug)]
#[command(name = "resokit", version, about = "Superconducting resonator design and analysis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Geometry configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; records are appended to `results.jsonl` there.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Override a tolerance, e.g. `--tolerance pr=0.3`.
    #[arg(long = "tolerance", global = true, value_parser = parse_key_value)]
    pub tolerance: Vec<(String, f64)>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Records,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic frequency, impedance and inductance of each resonator.
    Design,
    /// Interface participation ratios from the field solver.
    Pr(commands::PrArgs),
    /// Fit S21 traces (CSV or .s2p).
    Fit(commands::FitArgs),
    /// Fit the TLS loss model to a power sweep.
    Tls(commands::TlsArgs),
    /// Build or inspect an input-line attenuation chain.
    Calibrate(commands::CalibrateArgs),
    /// Mean photon number for a drive power.
    Photons(commands::PhotonArgs),
    /// Loss fluctuation statistics and log-log regression.
    Stats(commands::StatsArgs),
    /// Compare computed values against the bundled reference tables.
    Report(report::ReportArgs),
    /// Write a synthetic notch-resonator trace.
    Synth(commands::SynthArgs),
}

fn parse_key_value(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Process exit status for each error kind.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 10,
        Error::Parse { .. } => 11,
        Error::InvalidInput(_) => 12,
        Error::Domain(_) => 13,
        Error::NoResonance(_) => 14,
        Error::NonConvergence { .. } => 15,
        Error::Unphysical(_) => 16,
        Error::InsufficientRange(_) => 17,
        Error::OutOfRange { .. } => 18,
        Error::Mesh(_) => 19,
        Error::Solve(_) => 20,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Design => commands::design(g),
        Command::Pr(a) => commands::pr(g, a),
        Command::Fit(a) => commands::fit(g, a),
        Command::Tls(a) => commands::tls(g, a),
        Command::Calibrate(a) => commands::calibrate(g, a),
        Command::Photons(a) => commands::photons(g, a),
        Command::Stats(a) => commands::stats(g, a),
        Command::Report(a) => report::report(g, a),
        Command::Synth(a) => commands::synth(g, a),
    };
    match result.and_then(|out| out.emit(g)) {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
