use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "polyfrac", version, about = "Sharp fractal examples for polyhedral-norm distance sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON), or a manifest written by an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Maximum number of cubes examined per exact count.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    /// Points file to read (default: <out>/points.txt).
    #[arg(long, global = true)]
    pub points: Option<PathBuf>,
    /// Distance CSV to reuse in boxdim; its manifest hash must match the config.
    #[arg(long, global = true)]
    pub distances: Option<PathBuf>,
    /// Pinned distances from the x point (default).
    #[arg(long, global = true, conflicts_with = "pairwise")]
    pub pinned: bool,
    /// Distances between sample pairs.
    #[arg(long, global = true)]
    pub pairwise: bool,
    /// Maximum number of pairs for --pairwise.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub cap: usize,
    /// Add a floor-exact Euclidean column at scale r.
    #[arg(long, global = true, value_name = "R")]
    pub euclid: Option<u32>,
    /// Report the distance-set inequality check.
    #[arg(long, global = true)]
    pub falconer: bool,
    /// Largest distance checkpoint scale that is gated.
    #[arg(long, global = true, default_value_t = 32)]
    pub rmax: u32,
    /// Tolerance for --falconer.
    #[arg(long, global = true, default_value_t = 0.15)]
    pub tol: f64,
    /// Also write an SVG chart of the box counts.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pinned point and sample points, verify them and write a points file.
    Construct,
    /// Build sample points only.
    Sample,
    /// Compute a distance set from a points file.
    Distset,
    /// Box counts of the set and of its pinned distance sets.
    Boxdim,
    /// Analytic log-count profiles.
    Profile,
    /// Re-verify a points file.
    Verify,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(m: impl std::fmt::Display) -> Self {
        Failure { code: 2, message: m.to_string() }
    }

    pub fn verification(m: impl std::fmt::Display) -> Self {
        Failure { code: 3, message: m.to_string() }
    }

    pub fn budget(m: impl std::fmt::Display) -> Self {
        Failure { code: 4, message: m.to_string() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

fn main() -> ExitCode {
    polyfrac::init_threads();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
