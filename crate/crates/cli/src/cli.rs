use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "extremal-lab", version, about = "Check extremal entropy inequalities, certify monotone paths and solve the matrix programs behind them")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Base seed for every random instance and Monte Carlo stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo samples per estimate (at least 10000).
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,
    /// Number of interior grid points for path certification (at least 16).
    #[arg(long, global = true, default_value_t = 64)]
    pub grid: usize,
    /// Closed-form tolerance: identity residual for `lemmas`, sign and endpoint
    /// residual for `path`, KKT residual for `solve` and `region`.
    #[arg(long, global = true)]
    pub tol_closed: Option<f64>,
    /// Relative Monte Carlo tolerance for `lemmas` and `path`.
    #[arg(long, global = true)]
    pub tol_mc: Option<f64>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the identity and inequality checkers over seeded random instances.
    Lemmas(LemmasArgs),
    /// Certify the monotone path described by a problem file.
    Path {
        file: PathBuf,
        /// Exit 0 when the path fails but its hypothesis is violated (negative controls).
        #[arg(long)]
        allow_control: bool,
    },
    /// Solve a matrix program and check its KKT conditions.
    Solve {
        file: PathBuf,
        /// Expected problem kind; must match the file.
        #[arg(long, value_enum)]
        kind: Option<SolveKind>,
    },
    /// Sweep a family of weights and write the supporting-hyperplane trace.
    Region {
        file: PathBuf,
        /// Solve every point from scratch instead of warm-starting from its neighbour.
        #[arg(long)]
        cold_start: bool,
    },
    /// Run the acceptance battery at reduced sizes.
    Selftest,
}

#[derive(Debug, Clone, Args)]
pub struct LemmasArgs {
    /// Checkers to run, comma separated or repeated.
    #[arg(long, value_delimiter = ',', conflicts_with = "all")]
    pub only: Vec<String>,
    /// Run every checker (the default when `--only` is absent).
    #[arg(long)]
    pub all: bool,
    /// Skip the mixture instances.
    #[arg(long, conflicts_with = "mixture_only")]
    pub gaussian_only: bool,
    /// Skip the Gaussian instances.
    #[arg(long)]
    pub mixture_only: bool,
    /// Gaussian instances per checker.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Mixture instances per checker.
    #[arg(long, default_value_t = 25)]
    pub mixture_instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveKind {
    Lv,
    Bc,
    Sec,
    Costa,
}

impl SolveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveKind::Lv => "lv",
            SolveKind::Bc => "bc",
            SolveKind::Sec => "sec",
            SolveKind::Costa => "costa",
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lemmas(_) => "lemmas",
            Command::Path { .. } => "path",
            Command::Solve { .. } => "solve",
            Command::Region { .. } => "region",
            Command::Selftest => "selftest",
        }
    }

    pub fn input(&self) -> Option<&std::path::Path> {
        match self {
            Command::Path { file, .. } | Command::Solve { file, .. } | Command::Region { file, .. } => Some(file),
            _ => None,
        }
    }
}
