//! `planekit` command line: dataset generation, gradient and warp checks,
//! toy training and evaluation.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or I/O error.

mod eval;
mod gradcheck;
mod synth;
mod train;
mod warp;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "planekit", version, about = "Piece-wise planar geometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic planar scenes (or stereo pairs) to manifests and FMAP maps.
    SynthGen(synth::Args),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(gradcheck::Args),
    /// Run the warp and plane-transform oracles on a stored pair.
    WarpCheck(warp::Args),
    /// Train a plane head on stored pairs.
    TrainToy(train::Args),
    /// Pool predictions and score them against ground truth.
    Eval(eval::Args),
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    /// A check ran and did not pass.
    Check(String),
    /// Bad input, unreadable or unwritable files.
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<planekit::Error> for Failure {
    fn from(e: planekit::Error) -> Self {
        Failure::Usage(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("PLANEKIT_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().with_context(|| format!("PLANEKIT_THREADS={raw:?} is not a count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().map_err(Failure::Usage).and_then(|()| match cli.command {
        Command::SynthGen(a) => synth::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::WarpCheck(a) => warp::run(a),
        Command::TrainToy(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub(crate) fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

pub(crate) fn ensure_dir(dir: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
