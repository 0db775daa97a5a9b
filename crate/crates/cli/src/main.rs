//! `gtrident`: forward simulation, recovery, batch round trips, regime
//! classification and the worked counterexamples, from the command line.

mod commands;
mod roundtrip;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status: 0 success, 1 invalid input, 2 numerical failure or
/// degeneracy, 3 I/O error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Validation = 1,
    Numerical = 2,
    Io = 3,
}

/// Error raised by the front end itself, carrying its exit status.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub msg: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for CliError {}

pub fn fail(exit: Exit, msg: impl Into<String>) -> anyhow::Error {
    CliError { exit, msg: msg.into() }.into()
}

fn exit_status(err: &anyhow::Error) -> Exit {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.exit;
        }
        if let Some(e) = cause.downcast_ref::<gtrident::Error>() {
            return if e.is_io() {
                Exit::Io
            } else if e.is_validation() {
                Exit::Validation
            } else {
                Exit::Numerical
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Exit::Io;
        }
    }
    Exit::Numerical
}

#[derive(Parser, Debug)]
#[command(name = "gtrident", version, about = "Identifiability of GTR+Gamma on three-taxon trees and beyond")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute the joint leaf distribution of a model on a tree.
    Forward(ForwardArgs),
    /// Recover model parameters (and, for more than three taxa, the tree).
    Recover(RecoverArgs),
    /// Batch forward-then-recover trials; CSV report.
    Roundtrip(RoundtripArgs),
    /// Report the eigenvector regime of a model.
    Classify(ClassifyArgs),
    /// Worked counterexamples.
    #[command(subcommand)]
    Counterexample(Counterexample),
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
    /// Three pendant lengths `a,b,c`; overrides the model file.
    #[arg(long, value_parser = parse_triple)]
    pub t: Option<[f64; 3]>,
    /// Newick tree; overrides the model file.
    #[arg(long, conflicts_with = "t")]
    pub tree: Option<String>,
    /// Output tensor path.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the binary tensor format instead of JSON.
    #[arg(long)]
    pub binary: bool,
    /// Cross-check against direct quadrature over the rate distribution.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 64)]
    pub oracle_nodes: usize,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    /// Tensor file (JSON or binary).
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Newick output for more than three taxa (default: `--out` with a `.nwk` extension).
    #[arg(long)]
    pub newick: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Generic,
    Jc,
    K2p,
    K3p,
    #[value(name = "case-a2")]
    CaseA2,
    #[value(name = "case-b")]
    CaseB,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Number of states; the named exceptional regimes need 4.
    #[arg(long, default_value_t = 4)]
    pub kappa: usize,
    #[arg(long, value_enum, default_value_t = Regime::Generic)]
    pub regime: Regime,
    /// CSV output path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Counterexample {
    /// Points (f(tau1 x), f(tau2 x)) as CSV, plus their inflection count.
    RogersCurve(RogersArgs),
    /// Fiber of the map (a, b) -> (a, ab) over (x, y).
    Phi(PhiArgs),
    /// Two different (alpha, t) for the symmetric two-state model with the same distribution.
    BinaryNonident(BinaryArgs),
}

#[derive(Args, Debug)]
pub struct RogersArgs {
    #[arg(long, default_value_t = 1.0)]
    pub tau1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub tau2: f64,
    #[arg(long, default_value_t = 3.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Emit the graph (x, f(x)) instead of the curve.
    #[arg(long)]
    pub graph: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PhiArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y: f64,
}

#[derive(Args, Debug)]
pub struct BinaryArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_parser = parse_triple, default_value = "0.3,0.3,0.3")]
    pub t: [f64; 3],
    #[arg(long, default_value_t = 2.0)]
    pub alpha_alt: f64,
    /// Directory receiving the two model files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> =
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected three comma-separated lengths, got {}", v.len()))
}

// Context layers and wrapped sources often repeat the inner message; print
// each distinct piece once.
fn report(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !parts.iter().any(|p| p.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Validation as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(exit_status(&e) as u8)
        }
    }
}
