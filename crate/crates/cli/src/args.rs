use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stocknet::ingest::GapPolicy;
use stocknet::synth::SynthSpec;

#[derive(Debug, Parser)]
#[command(name = "stocknet", version)]
#[command(about = "Correlation MST stock networks, statistical factors and degree/R² analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the whole pipeline from a price panel.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic market with known factor structure.
    Synth(SynthArgs),
    /// Correlation matrix, distances and minimum spanning tree.
    Network(NetworkArgs),
    /// Factor extraction, rotation and scores.
    Factors(FactorsArgs),
    /// Per-stock multi-factor regressions on stored scores.
    Regress(RegressArgs),
    /// Industry average indexes and their correlation with factor scores.
    Industry(IndustryArgs),
    /// Degree versus mean R² profile from stored stage outputs.
    Profile(ProfileArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum GapPolicyArg {
    #[default]
    Reject,
    ForwardFill,
}

impl From<GapPolicyArg> for GapPolicy {
    fn from(g: GapPolicyArg) -> Self {
        match g {
            GapPolicyArg::Reject => GapPolicy::Reject,
            GapPolicyArg::ForwardFill => GapPolicy::ForwardFill,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Price panel CSV (date column plus one column per ticker).
    #[arg(long, required_unless_present = "returns", conflicts_with = "returns")]
    pub prices: Option<PathBuf>,
    /// Stored log-return panel, e.g. `returns.csv` from an earlier run.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// Missing-price handling when reading `--prices`.
    #[arg(long, value_enum, default_value_t = GapPolicyArg::Reject)]
    pub gap_policy: GapPolicyArg,
}

#[derive(Debug, Args)]
pub struct FactorOpts {
    /// Retain exactly K factors instead of applying the Kaiser rule.
    #[arg(long, value_name = "K")]
    pub factors: Option<usize>,
    /// Skip varimax rotation.
    #[arg(long)]
    pub no_rotate: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Price panel CSV (date column plus one column per ticker).
    #[arg(long)]
    pub prices: PathBuf,
    /// `ticker,industry_id` CSV; enables the industry outputs.
    #[arg(long)]
    pub membership: Option<PathBuf>,
    /// Require the industry outputs (fails without `--membership`).
    #[arg(long)]
    pub industry: bool,
    #[arg(long, value_enum, default_value_t = GapPolicyArg::Reject)]
    pub gap_policy: GapPolicyArg,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub factor_opts: FactorOpts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum SynthFormat {
    /// Price panel built by cumulating scaled returns from 100.
    #[default]
    Prices,
    /// The raw return panel.
    Returns,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub stocks: usize,
    #[arg(long, default_value_t = 2000)]
    pub days: usize,
    #[arg(long, default_value_t = 5)]
    pub factors: usize,
    /// Defaults to the factor count.
    #[arg(long)]
    pub industries: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub loading_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub loading_max: f64,
    #[arg(long, default_value_t = 0.25)]
    pub cross_loading: f64,
    #[arg(long, default_value_t = 0)]
    pub hubs_per_industry: usize,
    #[arg(long, value_enum, default_value_t = SynthFormat::Prices)]
    pub format: SynthFormat,
    /// Multiplier applied to returns before cumulating them into prices.
    #[arg(long, default_value_t = 0.01)]
    pub price_scale: f64,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_stocks: self.stocks,
            n_days: self.days,
            k_factors: self.factors,
            loading_min: self.loading_min,
            loading_max: self.loading_max,
            n_industries: self.industries.unwrap_or(self.factors),
            cross_loading: self.cross_loading,
            noise_sigma: self.noise,
            hubs_per_industry: self.hubs_per_industry,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FactorsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub factor_opts: FactorOpts,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Factor scores written by `factors`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndustryArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub membership: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Degree table written by `network`.
    #[arg(long)]
    pub degrees: PathBuf,
    /// Regression table written by `regress`.
    #[arg(long)]
    pub regression: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
