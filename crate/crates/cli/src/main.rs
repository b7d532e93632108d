//! `certlim`: command-line front end for certified limit curves.
//!
//! Every subcommand accepts `--config <file>` with `key=value` lines that
//! mirror its flags; flags given on the command line win.

mod commands;
mod flags;
mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flags::{AlphaGrid, DesignFlag, GammaList, PolicyFlag, PopulationFlag};

#[derive(Debug, Parser)]
#[command(
    name = "certlim",
    version,
    about = "Certified out-of-sample loss limits for policies evaluated on trial data"
)]
struct Cli {
    /// `key=value` file mirroring the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw target and trial CSVs from a synthetic population.
    Simulate(SimulateArgs),
    /// Fit the logistic selection model on a pooled labeled CSV.
    Fit(FitArgs),
    /// Score rows with a fitted model, writing `id,odds`.
    Score(ScoreArgs),
    /// Limit curves for a policy from trial data and nominal odds.
    Evaluate(EvaluateArgs),
    /// Γ benchmarks by omitting each covariate in turn.
    BenchmarkGamma(BenchmarkArgs),
    /// Reliability diagram of nominal odds on a pooled labeled CSV.
    Reliability(ReliabilityArgs),
    /// IPSW baseline value and quantiles.
    Ipsw(IpswArgs),
    /// Monte Carlo miscoverage gap on a synthetic scenario.
    Miscoverage(MiscoverageArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HyperArgs {
    /// Ridge penalty on standardized coefficients.
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Gradient max-norm tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

impl HyperArgs {
    pub fn hyper(&self) -> certlim::FitHyper {
        certlim::FitHyper {
            l2: self.l2,
            max_iter: self.max_iter,
            tol: self.tol,
            ..Default::default()
        }
    }
}

/// Where nominal odds come from: a fitted model file or a score file.
#[derive(Debug, Clone, Args, Serialize)]
pub struct OddsArgs {
    /// Model JSON written by `fit`.
    #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
    pub model: Option<PathBuf>,
    /// Score CSV (`id,p_s1` or `id,odds`), ids indexing the scored rows.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Multiplier applied to every odds value.
    #[arg(long, default_value_t = 1.0)]
    pub prior_correction: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PolicyArgs {
    /// `constant:<a>`, `uniform` or `table:<path>`.
    #[arg(long, default_value = "constant:1")]
    pub policy: PolicyFlag,
    /// `uniform:<K>` or `probs:<p0,...>`.
    #[arg(long, default_value = "uniform:2")]
    pub design: DesignFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Matched,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    TargetCount,
    TotalWeight,
}

impl From<NormalizationKind> for certlim::Normalization {
    fn from(n: NormalizationKind) -> Self {
        match n {
            NormalizationKind::TargetCount => certlim::Normalization::TargetCount,
            NormalizationKind::TotalWeight => certlim::Normalization::TotalWeight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowsKind {
    All,
    Target,
    Trial,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    /// Target population: A, B, C, D, Trial or `custom:<mu0,mu1,mu_u,var0,var1,var_u>`.
    #[arg(long)]
    pub pop: PopulationFlag,
    /// Trial population.
    #[arg(long, default_value = "Trial")]
    pub trial_pop: PopulationFlag,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub m: usize,
    #[arg(long, default_value = "uniform:2")]
    pub design: DesignFlag,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "target.csv")]
    pub target_out: PathBuf,
    #[arg(long, default_value = "trial.csv")]
    pub trial_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct FitArgs {
    /// Pooled labeled CSV (`x0,...,s`).
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Any CSV with `x0,...` columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub trial: PathBuf,
    /// Target covariates; checked for consistency with the trial file.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[command(flatten)]
    pub odds: OddsArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Comma-separated Γ values.
    #[arg(long, default_value = "1")]
    pub gammas: GammaList,
    /// Comma-separated α values, or `default` for 0.01..0.99.
    #[arg(long, default_value = "default")]
    pub alphas: AlphaGrid,
    /// β candidates per α: `α·k/steps` for k = 1..steps-1.
    #[arg(long, default_value_t = 50)]
    pub beta_steps: usize,
    #[arg(long, value_enum, default_value_t = SplitKind::Matched)]
    pub split: SplitKind,
    /// D' fraction for the random split.
    #[arg(long, default_value_t = 0.5)]
    pub frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on losses, reported for trivial limits.
    #[arg(long)]
    pub l_max: Option<f64>,
    #[arg(long, default_value = "limits.json")]
    pub out: PathBuf,
    /// CSV copy of the curves (defaults to the JSON path with `.csv`).
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Pool rows on which ratios are evaluated.
    #[arg(long, value_enum, default_value_t = RowsKind::All)]
    pub rows: RowsKind,
    #[arg(long, default_value = "gamma_benchmark.json")]
    pub out: PathBuf,
    /// Optional CSV of every ratio (`feature,row,ratio`).
    #[arg(long)]
    pub ratios_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    pub odds: OddsArgs,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    #[arg(long, default_value = "reliability.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct IpswArgs {
    #[arg(long)]
    pub trial: PathBuf,
    /// Target covariates; its row count is `n`.
    #[arg(long, required_unless_present = "n")]
    pub target: Option<PathBuf>,
    /// Target sample size, if no target file is given.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub odds: OddsArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value = "default")]
    pub alphas: AlphaGrid,
    #[arg(long, value_enum, default_value_t = NormalizationKind::TargetCount)]
    pub normalization: NormalizationKind,
    #[arg(long, default_value = "ipsw.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OddsKind {
    Logistic,
    OracleX,
    OracleU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Certified,
    Ipsw,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct MiscoverageArgs {
    #[arg(long, default_value = "B")]
    pub pop: PopulationFlag,
    #[arg(long, default_value = "Trial")]
    pub trial_pop: PopulationFlag,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub m: usize,
    /// Held-out trial rows for fitting the odds model (defaults to m).
    #[arg(long)]
    pub m_fit: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, value_enum, default_value_t = OddsKind::Logistic)]
    pub odds: OddsKind,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_enum, default_value_t = MethodKind::Certified)]
    pub method: MethodKind,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 50)]
    pub beta_steps: usize,
    #[arg(long, value_enum, default_value_t = SplitKind::Matched)]
    pub split: SplitKind,
    #[arg(long, default_value_t = 0.5)]
    pub frac: f64,
    #[arg(long, value_enum, default_value_t = NormalizationKind::TargetCount)]
    pub normalization: NormalizationKind,
    #[arg(long, default_value = "0.05,0.1,0.2")]
    pub alphas: AlphaGrid,
    /// Replications R.
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    /// Fresh target draws T per replication.
    #[arg(long, default_value_t = 500)]
    pub per_run: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run replications on one thread.
    #[arg(long)]
    pub serial: bool,
    #[arg(long, default_value = "miscoverage.json")]
    pub out: PathBuf,
}

fn main() -> std::process::ExitCode {
    let args = match flags::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return std::process::ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Score(a) => commands::score(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::BenchmarkGamma(a) => commands::benchmark_gamma(&a),
        Command::Reliability(a) => commands::reliability(&a),
        Command::Ipsw(a) => commands::ipsw(&a),
        Command::Miscoverage(a) => commands::miscoverage(&a),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
