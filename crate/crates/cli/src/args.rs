//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapepose::{ConstraintForm, Solver};

pub const SCHEMA_HELP: &str = "\
FILES
  problem.json  {\"keypoints\": [[x,y,z], ...],
                 \"library\": [B_1, ..., B_N],   each B_i row-major 3×K: [[..K..],[..K..],[..K..]]
                 \"weights\": [w_1, ...],        optional, default 1.0 each
                 \"lambda\": λ}                  optional, default 0
                Column k of B_i is keypoint i on library shape k. Units: meters.
  result.json   {\"solver\": name,
                 \"estimate\": {\"q\": [w,x,y,z] (scalar first), \"r\": 9 values row-major,
                              \"p\": [x,y,z], \"c\": [K], \"objective\", \"mu\", \"iterations\",
                              \"converged\", \"certified\", \"shape_in_box\", \"diagnostic\"?},
                 \"certificate\"?: {\"certified\", \"verdict\", \"min_eig_S\", \"multipliers\": [7],
                                  \"stationarity_residual\", \"form\", \"convention\"},
                 \"gnc\"?: {\"weights\": [N], \"inliers\", \"iterations\", \"mu\", \"converged\"}}
  mask.json     [true, false, ...]  one entry per keypoint; false fixes the GNC weight at 0
  results.csv   one row per (trial, solver); schema in the README
  summary.json  {\"config\": synthetic config, \"solvers\": [per-solver statistics]}
  basin.csv     x,y,z (stereographic projection of the start), label, iterations,
                converged, objective

EXIT CODES
  0  success (solve: converged; certify: certified)
  1  input, usage, or I/O error
  2  solve: not converged; certify: not certified

ENVIRONMENT
  SHAPEPOSE_SEED  default for --seed";

#[derive(Debug, Parser)]
#[command(
    name = "shapepose",
    version,
    about = "Joint shape and pose estimation with self-consistent field iteration and optimality certificates",
    after_long_help = SCHEMA_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate shape and pose for one problem file.
    Solve(SolveArgs),
    /// Check global optimality of a candidate rotation.
    Certify(CertifyArgs),
    /// Run the synthetic benchmark and write per-trial CSV plus a JSON summary.
    Bench(BenchArgs),
    /// Map SCF basins of attraction from random starts.
    Basin(BasinArgs),
    /// Write a seeded synthetic problem as JSON.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IterArgs {
    /// Convergence tolerance (SCF: sine of the step angle; G-N/L-M: step norm).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap [default: SCF 100, G-N/L-M 50].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Seed for random starts and synthetic data.
    #[arg(long, env = "SHAPEPOSE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Initial rotation: identity, random, or a quaternion "w,x,y,z".
    #[arg(long, default_value = "identity")]
    pub init: String,
}

#[derive(Debug, Clone, Args)]
pub struct CertArgs {
    /// Relative tolerance on the smallest eigenvalue of the dual matrix.
    #[arg(long, default_value_t = 1e-4)]
    pub psd_tol: f64,
    /// Orthogonality constraints of the relaxation: columns (RᵀR = I) or rows (RRᵀ = I).
    #[arg(long, default_value = "columns", value_parser = parse_form)]
    pub constraints: ConstraintForm,
}

#[derive(Debug, Args)]
#[command(after_long_help = SCHEMA_HELP)]
pub struct SolveArgs {
    /// Problem JSON file.
    pub problem: PathBuf,
    /// Result JSON path [default: stdout].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Rotation solver: scf, gn, or lm.
    #[arg(long, default_value = "scf", value_parser = parse_solver)]
    pub solver: Solver,
    #[command(flatten)]
    pub iter: IterArgs,
    /// Number of SCF starts; starts after the first are random (SCF only).
    #[arg(long, default_value_t = 1)]
    pub multi_start: usize,
    /// Attach an optimality certificate to the result.
    #[arg(long)]
    pub certify: bool,
    #[command(flatten)]
    pub cert: CertArgs,
    /// Reject outliers with graduated non-convexity (requires --cbar2).
    #[arg(long, requires = "cbar2")]
    pub gnc: bool,
    /// GNC inlier threshold on squared residuals (m²).
    #[arg(long, requires = "gnc")]
    pub cbar2: Option<f64>,
    /// GNC annealing factor for μ.
    #[arg(long, default_value_t = 1.4, requires = "gnc")]
    pub mu_update: f64,
    /// Cap on GNC outer iterations.
    #[arg(long, default_value_t = 100, requires = "gnc")]
    pub gnc_max_iters: usize,
    /// JSON array of booleans; false fixes a keypoint's GNC weight at zero.
    #[arg(long, requires = "gnc")]
    pub mask: Option<PathBuf>,
    /// Write the SCF iterates as CSV (SCF only, single start, no GNC).
    #[arg(long, conflicts_with = "gnc")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_long_help = SCHEMA_HELP)]
pub struct CertifyArgs {
    /// Problem JSON file.
    pub problem: PathBuf,
    /// Result JSON (as written by solve) or a bare estimate object.
    pub result: PathBuf,
    /// Certificate JSON path [default: stdout].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub cert: CertArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// N = 10, K = 4, λ = 0.
    Default,
    /// N = 10, K = 25, λ = 1.
    HighK,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Parameter preset; explicit flags override it.
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// Number of keypoints.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of library shapes.
    #[arg(long)]
    pub k: Option<usize>,
    /// Library spread around the mean shape (m).
    #[arg(long)]
    pub r: Option<f64>,
    /// Normalized noise level; keypoint noise std is sigma_m · r.
    #[arg(long, default_value_t = 0.25)]
    pub sigma_m: f64,
    /// Shape regularizer.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Use the noise precision as keypoint weights instead of 1.
    #[arg(long)]
    pub noise_weights: bool,
}

#[derive(Debug, Args)]
#[command(after_long_help = SCHEMA_HELP)]
pub struct BenchArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Number of measured trials.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Comma-separated solvers; scf* is SCF with certification inside the timing.
    #[arg(long, default_value = "scf,scf*,gn,lm")]
    pub solver: String,
    #[command(flatten)]
    pub iter: IterArgs,
    #[command(flatten)]
    pub cert: CertArgs,
    /// Untimed trials run first.
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Run trials on all cores (accuracy columns are unchanged).
    #[arg(long)]
    pub parallel: bool,
    /// Output directory for results.csv and summary.json.
    #[arg(short, long, default_value = ".")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(after_long_help = SCHEMA_HELP)]
pub struct BasinArgs {
    /// Problem JSON file [default: a synthetic problem from --sigma-m/--trial/--seed].
    pub problem: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Synthetic trial index.
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
    /// Number of random starts.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Fixed points closer than this (degrees) share a label.
    #[arg(long, default_value_t = 1.0)]
    pub cluster_deg: f64,
    /// Convergence tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Iteration cap per start.
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Seed for starts and synthetic data.
    #[arg(long, env = "SHAPEPOSE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// basin.csv path [default: stdout].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the distinct minima as JSON.
    #[arg(long)]
    pub minima: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_long_help = SCHEMA_HELP)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Trial index (the random stream).
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
    #[arg(long, env = "SHAPEPOSE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Problem JSON path [default: stdout].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the ground truth {q, r, p, c} as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<Solver, String> {
    s.parse().map_err(|e: shapepose::Error| e.to_string())
}

fn parse_form(s: &str) -> Result<ConstraintForm, String> {
    s.parse().map_err(|e: shapepose::Error| e.to_string())
}
