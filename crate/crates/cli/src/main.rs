//! `hyperreg`: run regulation scenarios, design gains, export kernels,
//! analyze the output delay equation and sweep parameters.
//!
//! Exit codes: 0 success, 1 checks failed, 2 bad input, 3 numerical
//! failure, 4 inadmissible tuning.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod nde_cmd;
mod output;
mod run;
mod scenario;
mod svg;
mod sweep;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperreg_core::nde::FeedbackGains;
use serde::Serialize;

use crate::commands::GainInputs;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hyperreg", version, about = "Output regulation of 2x2 hyperbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled scenario and evaluate its checks.
    Simulate {
        scenario: String,
        /// Directory for trace.csv, summary.json and plots.svg.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integral gain from the delay-margin design.
    Gain(GainArgs),
    /// Solve and export the kernels of a scenario's plant.
    Kernels {
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also solve on 2n and 4n cells and require first-order convergence.
        #[arg(long)]
        check: bool,
    },
    /// Stability and trend of the output delay equation.
    Nde(NdeArgs),
    /// Run a parameter sweep described by a TOML or JSON file.
    Sweep {
        file: PathBuf,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
        /// Worker threads; defaults to HYPERREG_WORKERS or the core count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the bundled scenarios, or print one.
    Scenarios { name: Option<String> },
}

#[derive(Args)]
struct GainArgs {
    /// Scenario to design for; otherwise all of --q, --rho, --rho-tilde, --tau.
    scenario: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho_tilde: Option<f64>,
    /// Round-trip transport delay.
    #[arg(long)]
    tau: Option<f64>,
    /// Fraction of the delay margin to use, in (0, 1).
    #[arg(long)]
    margin: Option<f64>,
    /// `1 + l1(1)λ(1)`; 1 for an uncoupled plant.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    boundary_factor: f64,
}

#[derive(Args)]
struct NdeArgs {
    /// Scenario whose closed loop is analyzed; otherwise --k1, --k2, --tau.
    scenario: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    k1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k2: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Trend windows to integrate over.
    #[arg(long, default_value_t = 30)]
    windows: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Writes to stdout; a reader that hung up early is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    emit(&(s + "\n"))
}

fn need(v: Option<f64>, flag: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Input(format!("missing --{flag} (or give a scenario)")))
}

/// Ok(false) means the command ran but its checks failed.
fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let s = scenario::load(&scenario)?;
            let outcome = run::run(&s)?;
            if let Some(dir) = out {
                run::write_outputs(&dir, &outcome)?;
            }
            for c in &outcome.report.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                eprintln!("[{tag}] {}: {:.4e} (bound {:.4e})", c.check, c.value, c.bound);
            }
            print_json(&outcome.report)?;
            Ok(outcome.report.passed)
        }
        Command::Gain(g) => {
            let report = match g.scenario {
                Some(name) => {
                    let mut s = scenario::load(&name)?;
                    if let Some(m) = g.margin {
                        s.controller.margin = m;
                    }
                    commands::gain_from_scenario(&s)?
                }
                None => commands::gain_from_inputs(GainInputs {
                    q: need(g.q, "q")?,
                    rho: need(g.rho, "rho")?,
                    rho_tilde: need(g.rho_tilde, "rho-tilde")?,
                    tau: need(g.tau, "tau")?,
                    margin: g.margin.unwrap_or(0.5),
                    boundary_factor: g.boundary_factor,
                })?,
            };
            print_json(&report)?;
            Ok(true)
        }
        Command::Kernels { scenario, out, check } => {
            let s = scenario::load(&scenario)?;
            let report = commands::kernels(&s, out.as_deref(), check)?;
            print_json(&report)?;
            Ok(report.convergence.as_ref().is_none_or(|c| c.passed))
        }
        Command::Nde(a) => {
            let outcome = match a.scenario {
                Some(name) => nde_cmd::analyze_scenario(&scenario::load(&name)?, a.windows)?,
                None => nde_cmd::analyze(
                    FeedbackGains {
                        k1: need(a.k1, "k1")?,
                        k2: need(a.k2, "k2")?,
                        tau: need(a.tau, "tau")?,
                    },
                    None,
                    a.windows,
                )?,
            };
            if let Some(dir) = a.out {
                nde_cmd::write_outputs(&dir, &outcome)?;
            }
            print_json(&outcome.report)?;
            Ok(true)
        }
        Command::Sweep { file, out, workers } => {
            let (agg, _) = sweep::run_sweep(&file, &out, workers)?;
            print_json(&agg)?;
            Ok(agg.errors == 0 && agg.checks_failed == 0)
        }
        Command::Scenarios { name } => {
            match name {
                Some(n) => emit(&scenario::read_source(&n)?.0)?,
                None => emit(&scenario::bundled_names().map(|n| format!("{n}\n")).collect::<String>())?,
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
