//! `helimin`: mesh audit, single minimization runs, the projection
//! counterexamples, the cobalt D-sweep and VTK export.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INPUT: u8 = 1;
    pub const ANGLE_CONDITION: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
    pub const ASSERTION: u8 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "helimin", version, about = "Tangent-plane minimization of helical thin-film energies")]
pub struct Cli {
    /// `key = value` file supplying defaults for any flag not given.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug); `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh utilities.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Minimize the energy from one initial state.
    Minimize(MinimizeArgs),
    /// Reproduce the two projection counterexamples.
    Counterexamples(CounterexampleArgs),
    /// Run the cobalt disk sweep over the DMI constant.
    Sweep(SweepArgs),
    /// Write a field on a mesh as legacy VTK.
    Export(ExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum MeshCommand {
    /// Audit the angle condition; exits with 2 if it is violated.
    Check(MeshCheckArgs),
}

/// Where the mesh comes from; at most one source may be given.
#[derive(Debug, Clone, Args, Default)]
pub struct MeshSource {
    /// Structured unit square with N×N cells.
    #[arg(long, value_name = "N", group = "mesh_source")]
    pub square: Option<usize>,
    /// Mesh file (`nodes N` / `triangles M` format).
    #[arg(long, value_name = "FILE", group = "mesh_source")]
    pub mesh: Option<PathBuf>,
    /// Disk of the given dimensionless radius centred at the origin.
    #[arg(long, value_name = "RADIUS", group = "mesh_source")]
    pub disk: Option<f64>,
    /// Target mesh width for generated disks.
    #[arg(long, value_name = "H")]
    pub h: Option<f64>,
}

/// Model parameters: either `(κ, γ)` directly or a material with `D`.
#[derive(Debug, Clone, Args, Default)]
pub struct ParamArgs {
    /// Dimensionless DMI strength κ.
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Dimensionless anisotropy coefficient γ.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Material preset (only `cobalt`); conflicts with --kappa/--gamma.
    #[arg(long, conflicts_with_all = ["kappa", "gamma"])]
    pub material: Option<String>,
    /// DMI constant in J/m² used with --material.
    #[arg(long = "D", value_name = "D", requires = "material")]
    pub d: Option<f64>,
    /// Disk diameter in metres used with --material (default 80e-9).
    #[arg(long, value_name = "METRES")]
    pub diameter: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MeshCheckArgs {
    #[command(flatten)]
    pub source: MeshSource,
    /// Also write the mesh to this file.
    #[arg(long, value_name = "FILE")]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub source: MeshSource,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Initial state: e1, e3, skyrmion, random, or a path to a field file.
    #[arg(long)]
    pub ic: Option<String>,
    /// Skyrmion radius (dimensionless); default 15 nm in exchange lengths.
    #[arg(long)]
    pub skyrmion_radius: Option<f64>,
    /// Half-width of the skyrmion transition layer (dimensionless).
    #[arg(long)]
    pub layer_width: Option<f64>,
    /// Stop once J_h(w) ≤ tol.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Relative tolerance of the linear solver.
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Maximum number of outer iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Maximum number of Krylov iterations per tangent solve.
    #[arg(long)]
    pub solver_max_iters: Option<usize>,
    /// Do not add the uniqueness constraints when κ = 0.
    #[arg(long)]
    pub no_uniqueness_constraints: bool,
    /// Seed for the random initial state.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// File stem of the outputs in the output directory.
    #[arg(long)]
    pub name: Option<String>,
    /// Skip the VTK file.
    #[arg(long)]
    pub no_vtk: bool,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    /// Perturbation size of the anisotropy counterexample, in (0, 4/3).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Print the full (κ, γ) grid of the helical counterexample.
    #[arg(long)]
    pub helical_scan: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Material preset (only `cobalt`).
    #[arg(long)]
    pub material: Option<String>,
    /// `START:END:UNIT`: D = k·UNIT for k = START, START+1, ..., END.
    #[arg(long = "D-range", value_name = "START:END:UNIT")]
    pub d_range: Option<String>,
    /// Initial states to run (constant, skyrmion); repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub ic: Vec<String>,
    /// Output directory for per-run files and summary.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dimensionless mesh width of the disk.
    #[arg(long)]
    pub h: Option<f64>,
    /// Disk diameter in metres.
    #[arg(long, value_name = "METRES")]
    pub diameter: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Maximum number of outer iterations per run.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: MeshSource,
    /// Field file to export.
    #[arg(long, value_name = "FILE")]
    pub field: Option<PathBuf>,
    /// Destination `.vtk` file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

/// Restores the default SIGPIPE action so that piping into `head` ends the
/// process quietly instead of panicking on the next write.
#[cfg(unix)]
fn reset_sigpipe() {
    // SAFETY: called once at startup before any other thread exists.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    // clap's own exit code for usage errors (2) is taken by the angle check
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INPUT } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    let config = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(exit::INPUT);
            }
        },
        None => ConfigFile::default(),
    };
    let result = match &cli.command {
        Command::Mesh(MeshCommand::Check(args)) => commands::mesh_check(args, &config),
        Command::Minimize(args) => commands::minimize(args, &config),
        Command::Counterexamples(args) => commands::counterexamples(args, &config),
        Command::Sweep(args) => commands::sweep(args, &config),
        Command::Export(args) => commands::export(args, &config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e))
        }
    }
}
