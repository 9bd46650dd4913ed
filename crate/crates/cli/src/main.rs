use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod inputs;

use inputs::{Preset, SpaceArgs};

/// Conformal transformations of discrete metric measure spaces.
///
/// Exit status is 0 when every check passes, 1 when a check fails and 2 on
/// invalid input.
#[derive(Debug, Parser)]
#[command(name = "conformal-mms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply `(w, v)` to a space; writes `space.json` and `distances.csv`.
    Transform(TransformArgs),
    /// Compare closed-form predictions with direct recomputation.
    Verify(VerifyArgs),
    /// Lower curvature bound of the transformed space.
    Curvature(CurvatureArgs),
    /// Fractal weight suite: measure/diameter series and distance gaps.
    Fractal(FractalArgs),
    /// Smooth Ricci tensor of `e^{2w} δ` at sample points.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Source node for the distance CSV.
    #[arg(long, default_value_t = 0)]
    source: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Identity to check; repeat for several. Defaults to all.
    #[arg(long)]
    identity: Vec<String>,
    /// Grid resolutions from coarse to fine.
    #[arg(long, default_values_t = [64, 128])]
    resolution: Vec<usize>,
    /// Relative error allowed at the finest resolution.
    #[arg(long, default_value_t = 5e-2)]
    tol: f64,
    /// Override the identity's default fields (expressions).
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    g: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CurvatureArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Curvature lower bound of the source space.
    #[arg(long = "K", default_value_t = 0.0, allow_hyphen_values = true)]
    k: f64,
    /// Dimension parameter (`N'` with `--general`).
    #[arg(long = "N", default_value_t = 2.0)]
    n: f64,
    /// Use the probe-based bound for arbitrary `(w, v)`.
    #[arg(long)]
    general: bool,
    /// Random probe fields on top of coordinates and their products.
    #[arg(long, default_value_t = conformal_mms::curvature::DEFAULT_RANDOM_PROBES)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance against the smooth oracle, when one applies.
    #[arg(long, default_value_t = 2e-2)]
    tol: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FractalArgs {
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Finest level `N`; gaps are reported for `from → … → depth`.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// First level of the gap chain.
    #[arg(long, default_value_t = 1)]
    from: usize,
    /// Depth of the measure/diameter series check.
    #[arg(long, default_value_t = 10)]
    series_depth: usize,
    #[arg(long, default_values_t = [128, 256])]
    resolution: Vec<usize>,
    /// Number of exterior point pairs.
    #[arg(long, default_value_t = 10)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// `stereographic-sphere` sets `w` and expects `K = 1`.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Conformal factor as an expression.
    #[arg(long)]
    w: Option<String>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Number of sample points in `[-1, 1]^dim`.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check `Ricci = K g` at every point.
    #[arg(long = "K", allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    out: OutArgs,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(s) = std::env::var("CONFORMAL_MMS_THREADS") {
        let n: usize = s.trim().parse().map_err(|_| anyhow::anyhow!("CONFORMAL_MMS_THREADS must be a positive integer, got {s:?}"))?;
        anyhow::ensure!(n > 0, "CONFORMAL_MMS_THREADS must be a positive integer, got 0");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Transform(a) => commands::transform(a),
        Command::Verify(a) => commands::verify(a),
        Command::Curvature(a) => commands::curvature(a),
        Command::Fractal(a) => commands::fractal(a),
        Command::Oracle(a) => commands::oracle(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
