//! `fracheat`: batch front end for threshold fits, envelopes, simulation,
//! the spectral oracle and the sandwich verification.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 verification failed.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "fracheat", version, about = "Heat kernels of fractional Schrödinger operators with confining potentials")]
pub struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; tables go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Mirror tables as JSON lines (`<out>.jsonl`, or instead of CSV on stdout).
    #[arg(long, global = true)]
    pub json: bool,
    /// Overrides `sim.seed`.
    #[arg(long, global = true, env = "FRACHEAT_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "FRACHEAT_THREADS")]
    pub threads: Option<usize>,
    /// Overrides the stability index `alpha`.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct PointPair {
    /// Point `x`, comma-separated coordinates.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub x: Vec<f64>,
    /// Point `y`, comma-separated coordinates.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub y: Vec<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Threshold time t0(s); `t0 fit` tabulates the fitted profile h.
    T0 {
        #[command(subcommand)]
        action: Option<T0Action>,
        /// Radii (comma-separated).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        s: Vec<f64>,
    },
    /// Heat-kernel envelopes at one point, or `envelope sweep` over the verify grid.
    Envelope {
        #[command(subcommand)]
        action: Option<EnvelopeAction>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y: Vec<f64>,
        /// Ground-state eigenvalue; otherwise from config or the spectral oracle.
        #[arg(long)]
        lambda1: Option<f64>,
    },
    /// Green-function envelope and its Q branch.
    Green {
        #[command(flatten)]
        points: PointPair,
    },
    /// Monte Carlo Feynman–Kac estimates.
    Simulate {
        #[command(subcommand)]
        action: SimulateAction,
    },
    /// Spectral oracle: eigenvalues and eigenfunctions, or `spectral kernel`.
    Spectral {
        #[command(subcommand)]
        action: Option<SpectralAction>,
        #[arg(long = "L")]
        l: Option<f64>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        /// Eigenfunctions written to the table.
        #[arg(long, default_value_t = 8)]
        modes: usize,
    },
    /// Sandwich verification against the spectral oracle or Monte Carlo.
    Verify {
        #[arg(long, value_enum, default_value_t = Oracle::Spectral)]
        oracle: Oracle,
    },
    /// Closed-form envelopes for V(x) = log^beta(1+|x|).
    Example1 {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        points: PointPair,
    },
}

#[derive(Subcommand, Debug)]
pub enum T0Action {
    /// Fit h on the configured threshold grid.
    Fit,
}

#[derive(Subcommand, Debug)]
pub enum EnvelopeAction {
    /// Envelopes on the verify grid: columns t,x,y,regime,lower,upper.
    Sweep {
        #[arg(long)]
        lambda1: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum SimulateAction {
    /// Survival functional E_x[exp(-int V)].
    Survival {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        /// Times (comma-separated).
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// Kernel p(t,x,y) in d = 1.
    Kernel {
        #[command(flatten)]
        points: PointPair,
        #[arg(long)]
        t: f64,
        /// Terminal window; defaults to t/50.
        #[arg(long)]
        delta: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum SpectralAction {
    /// p(t,x,y) at the nearest grid nodes.
    Kernel {
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        points: PointPair,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    Spectral,
    Mc,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::VerifyFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
