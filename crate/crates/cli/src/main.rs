//! `textbench` command-line entry point.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use textbench::benchmark::EstimatorKind;
use textbench::sim::ConfoundingMode;
use textbench::Outcome;

/// Error with its process exit code: 1 for bad inputs, 2 for failures while
/// running.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn io(path: impl AsRef<Path>, e: std::io::Error) -> Self {
        Failure::runtime(format!("{}: {e}", path.as_ref().display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<textbench::Error> for Failure {
    fn from(e: textbench::Error) -> Self {
        let code = if e.is_validation() { 1 } else { 2 };
        Failure { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "textbench", version, about = "Paired-design effect estimation and confounding benchmarks for text treatments")]
pub struct Cli {
    /// Worker threads for replica-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "TEXTBENCH_OUT", default_value = "textbench-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write a normalized copy.
    Ingest(IngestArgs),
    /// Remove edits that moved against the instructed direction.
    Audit(AuditArgs),
    /// Evaluation counts by topic, treatment and original/edit, before and after auditing.
    Counts(AuditArgs),
    /// Build semi-synthetic confounded replicas from a rated corpus.
    Simulate(SimulateArgs),
    /// Sample a fully synthetic paired corpus with known effects.
    Dgp(DgpArgs),
    /// Estimate effects on a corpus.
    Estimate(EstimateArgs),
    /// Simulate replicas, run every estimator on each and compare with the truth bands.
    Benchmark(BenchmarkArgs),
    /// Rebuild report files from a benchmark directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    /// Likert when every value is an integer in 1..=5, continuous otherwise.
    Auto,
    Likert,
    Continuous,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding units.csv, evaluations.csv and ratings.csv.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value = "auto")]
    pub scale: ScaleArg,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Required movement of the mean ih rating in the instructed direction.
    #[arg(long, default_value_t = 0.0)]
    pub min_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Amplified,
}

impl From<ModeArg> for ConfoundingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => ConfoundingMode::Baseline,
            ModeArg::Amplified => ConfoundingMode::Amplified,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConfoundingOverrides {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    #[arg(long)]
    pub replicas: Option<usize>,

    /// Selection slope in respect.
    #[arg(long)]
    pub kappa: Option<f64>,

    /// Likert steps of respect amplification.
    #[arg(long)]
    pub shift: Option<u32>,

    /// Injected treatment effect.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// TOML or JSON file with confounding parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: u64,

    #[command(flatten)]
    pub overrides: ConfoundingOverrides,
}

#[derive(Debug, Args)]
pub struct DgpArgs {
    /// TOML or JSON file with generator parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: u64,

    #[arg(long)]
    pub n_pairs: Option<usize>,

    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub z_shift: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,

    #[arg(long)]
    pub noise_sd: Option<f64>,

    #[arg(long)]
    pub evals_per_text: Option<usize>,

    /// Round outcomes to the 1..=5 scale.
    #[arg(long)]
    pub likert: bool,
}

/// Estimators available to `estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum EstimatorArg {
    /// Evaluation-level WLS with pair effects, clustered SE and permutation p-value.
    TauT,
    /// Mean of within-pair contrasts.
    TauTPaired,
    /// Document-label contrast over all texts.
    TauD,
    /// Document-label contrast over originals only.
    TauDOriginals,
    DiffInMeans,
    TopicAdjusted,
    BowOr,
    BowIpw,
    BowAipw,
    TiTrimmed,
    TiWinsorized,
}

impl EstimatorArg {
    pub fn observational(self) -> Option<EstimatorKind> {
        Some(match self {
            EstimatorArg::DiffInMeans => EstimatorKind::DiffInMeans,
            EstimatorArg::TopicAdjusted => EstimatorKind::TopicAdjusted,
            EstimatorArg::BowOr => EstimatorKind::BowOr,
            EstimatorArg::BowIpw => EstimatorKind::BowIpw,
            EstimatorArg::BowAipw => EstimatorKind::BowAipw,
            EstimatorArg::TiTrimmed => EstimatorKind::TiTrimmed,
            EstimatorArg::TiWinsorized => EstimatorKind::TiWinsorized,
            _ => return None,
        })
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// TOML or JSON file with learner and bound settings.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: u64,

    #[arg(long, value_enum, value_delimiter = ',', default_value = "tau_t")]
    pub estimator: Vec<EstimatorArg>,

    /// Outcome labels; every outcome present in the corpus by default.
    #[arg(long, value_delimiter = ',')]
    pub outcome: Vec<Outcome>,

    /// Random relabelings for the permutation p-value.
    #[arg(long, default_value_t = 1000)]
    pub n_perm: usize,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// TOML or JSON file mirroring the benchmark configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: u64,

    /// Estimators to run; defaults to the configured list.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Vec<EstimatorKind>,

    #[command(flatten)]
    pub overrides: ConfoundingOverrides,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `benchmark`.
    #[arg(long)]
    pub input: PathBuf,
}

fn run(cli: Cli) -> Result<String, Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::validation("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, out),
        Command::Audit(a) => commands::audit(a, out),
        Command::Counts(a) => commands::counts(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Dgp(a) => commands::dgp(a, out),
        Command::Estimate(a) => commands::estimate(a, out),
        Command::Benchmark(a) => commands::benchmark(a, out),
        Command::Report(a) => commands::report(a, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
