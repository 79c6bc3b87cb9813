//! `fkpp`: kernel tables, asymptotic checks and front experiments from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fkpp_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("run truncated: {0}")]
    Truncated(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use fkpp_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Core(e) if e.is_quadrature() => 3,
            CliError::Core(E::InsufficientSamples { .. } | E::DegenerateFit(_)) => 4,
            CliError::Core(_) => 2,
            CliError::Validation(_) => 4,
            CliError::Truncated(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fkpp", version, about = "Fractional Fisher-KPP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the fractional heat kernel p(x, t).
    Kernel(KernelArgs),
    /// Residual of the two-term kernel decomposition and its scaling in alpha.
    ValidateAsymptotics(ValidateArgs),
    /// Critical radius and transition times.
    Tau(TauArgs),
    /// Integrate a recipe and write snapshots.
    Solve(RecipeArgs),
    /// Integrate a recipe, track a level set and fit its regimes.
    Front(RecipeArgs),
    /// Run a front recipe for several alphas and compare crossover times.
    Sweep(RecipeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Quadrature,
    Spectral,
    Both,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Comma-separated radii.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    pub xs: Option<String>,
    /// `start:end:count`, evenly spaced and inclusive.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Quadrature)]
    pub method: MethodArg,
    /// Half-width of the periodic box used by the spectral path.
    #[arg(long, default_value_t = 50.0)]
    pub half_width: f64,
    /// Output directory; the CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Comma-separated alphas.
    #[arg(long)]
    pub alphas: String,
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long, default_value_t = 1.0)]
    pub x_min: f64,
    #[arg(long, default_value_t = 100.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Largest accepted max/min ratio of the residual constants.
    #[arg(long, default_value_t = 3.0)]
    pub ratio_limit: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TauArgs {
    /// Comma-separated alphas.
    #[arg(long, conflicts_with = "k_range", required_unless_present = "k_range")]
    pub alphas: Option<String>,
    /// `kmin:kmax`, meaning alpha = 1 - 10^-k for each integer k.
    #[arg(long)]
    pub k_range: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecipeArgs {
    /// Recipe file with one `key = value` per line.
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FKPP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("FKPP_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Kernel(a) => commands::kernel(&a),
        Command::ValidateAsymptotics(a) => commands::validate_asymptotics(&a),
        Command::Tau(a) => commands::tau(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Front(a) => commands::front(&a),
        Command::Sweep(a) => commands::sweep(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fkpp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
