use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

#[derive(Parser, Debug)]
#[command(name = "zonal", version, about = "Local-spectrum tests of zonal stationarity for point patterns")]
pub struct Cli {
    /// Master seed for every random quantity of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON file with settings for the command; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a point pattern and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the stationarity ANOVA on a pattern file or a log-periodogram table.
    Test(TestArgs),
    /// Replicated simulate-and-test study; settings come from --config.
    Study(StudyArgs),
    /// Compare two patterns' local spectra location by location.
    Compare(CompareArgs),
    /// Ripley's K with CSR envelopes, as CSV.
    Khat(KhatArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelName {
    Poisson,
    InhomPoisson,
    Thomas,
    Ssi,
    ZonalDefault,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Window as x0 y0 x1 y1 (default 0 0 70 70).
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    /// Poisson intensity per unit area.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Intensity expression over x, y for inhom-poisson.
    #[arg(long)]
    pub expr: Option<String>,
    /// Upper bound of the intensity expression (found by grid scan if absent).
    #[arg(long)]
    pub upper_bound: Option<f64>,
    /// Thomas parent intensity.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Thomas offspring dispersion (per-axis standard deviation).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Thomas mean offspring count.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Thomas mean offspring count as an expression of the parent location.
    #[arg(long)]
    pub mu_expr: Option<String>,
    /// SSI inhibition distance.
    #[arg(long)]
    pub r: Option<f64>,
    /// SSI target point count.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    /// Maximum expected number of points.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SpectralArgs {
    /// Window to read the pattern in: x0 y0 x1 y1 (default: declared in the file).
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    /// `auto`, `quadrants`, or a JSON file with explicit locations and frequencies.
    #[arg(long)]
    pub design: Option<String>,
    /// Bartlett filter half-width.
    #[arg(long)]
    pub h: Option<f64>,
    /// Daniell smoother width.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Smoothing quadrature nodes per axis (1 = raw periodogram).
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Pattern CSV.
    #[arg(required_unless_present = "table_json")]
    pub pattern: Option<PathBuf>,
    /// Analyse a log-periodogram table {"values": [[...]], "sigma2": s} instead of a pattern.
    #[arg(long, conflicts_with = "pattern")]
    pub table_json: Option<PathBuf>,
    #[command(flatten)]
    pub spectral: SpectralArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bonferroni pairwise location contrasts when the location effect is significant.
    #[arg(long)]
    pub posthoc: bool,
    /// Drop frequency number K (1-based) before the analysis.
    #[arg(long, value_name = "K")]
    pub drop_frequency: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Override the configured replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_name = "K")]
    pub drop_frequency: Option<usize>,
    /// Include per-replicate records in the JSON report.
    #[arg(long)]
    pub details: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[command(flatten)]
    pub spectral: SpectralArgs,
    /// Monte Carlo replicates for the null quantiles.
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct KhatArgs {
    pub pattern: PathBuf,
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    /// Largest radius (default: a quarter of the shorter window side).
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Number of evenly spaced radii on (0, rmax].
    #[arg(long)]
    pub nr: Option<usize>,
    /// Explicit comma-separated radii, overriding --rmax/--nr.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// CSR simulations for the envelope; 0 disables it.
    #[arg(long)]
    pub nsim: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
