//! Command-line flags and the matching TOML config sections.
//!
//! Every per-command struct doubles as a config section: the same field
//! names are accepted under `[price]`, `[simulate]`, and so on. Flags win
//! over the config file, which wins over built-in defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "timebound",
    version,
    about = "Pricing, LTV control and simulation for time-bound stablecoins"
)]
pub struct Cli {
    /// Output format for result files and stdout.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,

    /// Directory for result files and the run manifest.
    #[arg(long, global = true, env = "TIMEBOUND_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Put value, TLP, default probability, fair price and band for one closure.
    Price(PriceArgs),
    /// Fair price and no-arbitrage band from (π, ℓ).
    Band(BandArgs),
    /// Largest LTV whose default probability stays at or below ε.
    LtvMax(LtvMaxArgs),
    /// TLP over daily vol × closure length.
    TermStructure(TermStructureArgs),
    /// Closed-form put values against Monte Carlo on a σ × τ grid.
    Discrepancy(DiscrepancyArgs),
    /// Agent-based nightly market simulation.
    Simulate(SimulateArgs),
    /// Replay close → next-open history under static and dynamic LTV.
    Backtest(BacktestArgs),
    /// Empirical proxies (ADR premium, futures basis, overnight reversal).
    Proxies(ProxiesArgs),
    /// Data for the standard figures.
    Figures(FiguresArgs),
    /// Re-run the request recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftArg {
    Martingale,
    LogDrift,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceArgs {
    /// Official close S_c.
    #[arg(long)]
    pub close: Option<f64>,
    /// Annual drift μ.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Annual volatility σ.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Closure length in years (overrides --days).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Closure length in trading days.
    #[arg(long)]
    pub days: Option<f64>,
    #[arg(long, value_enum)]
    pub drift: Option<DriftArg>,
    #[arg(long)]
    pub ltv: Option<f64>,
    /// Default-probability target for the max-LTV rule.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandArgs {
    #[arg(long)]
    pub close: Option<f64>,
    /// Default probability π.
    #[arg(long)]
    pub pi: Option<f64>,
    /// Conditional loss fraction ℓ.
    #[arg(long)]
    pub ell: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LtvMaxArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub days: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermStructureArgs {
    /// Comma-separated daily vols.
    #[arg(long, value_delimiter = ',')]
    pub sigma_daily: Option<Vec<f64>>,
    /// Comma-separated closure lengths in trading days.
    #[arg(long, value_delimiter = ',')]
    pub days: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscrepancyArgs {
    #[arg(long)]
    pub close: Option<f64>,
    /// Comma-separated annual vols.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Comma-separated closure lengths in trading days.
    #[arg(long, value_delimiter = ',')]
    pub days: Option<Vec<f64>>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    Dynamic,
    Static,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Scenario preset: base, stress_vol, news_crash_week.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run this many consecutive seeds starting at --seed.
    #[arg(long)]
    pub n_seeds: Option<usize>,
    #[arg(long)]
    pub n_days: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// LTV for the static policy.
    #[arg(long)]
    pub ltv: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub gain_k: Option<f64>,
    #[arg(long)]
    pub tlp_target: Option<f64>,
    #[arg(long)]
    pub ltv_floor: Option<f64>,
    #[arg(long)]
    pub ltv_ceiling: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    #[arg(long)]
    pub smoothing_alpha: Option<f64>,
    /// Write the vault event log (single seed only).
    #[arg(long)]
    pub event_log: Option<bool>,
    /// Any `SimConfig` field; config file only.
    #[arg(skip)]
    pub overrides: Option<toml::Table>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestArgs {
    /// CSV with header date,close,next_open; defaults to the bundled dataset.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated static LTVs.
    #[arg(long, value_delimiter = ',')]
    pub static_ltvs: Option<Vec<f64>>,
    /// Include the dynamic policy.
    #[arg(long)]
    pub dynamic: Option<bool>,
    #[arg(long)]
    pub initial_ltv: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub fee_rate: Option<f64>,
    /// `ControllerConfig` fields; config file only.
    #[arg(skip)]
    pub controller: Option<toml::Table>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKindArg {
    Adr,
    Futures,
    Opens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketArg {
    ClosureHours,
    VolBucket,
    Event,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxiesArgs {
    #[arg(long, value_enum)]
    pub kind: Option<ProxyKindArg>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub bucket_by: Option<BucketArg>,
    /// CSV with a `date` column, required for --bucket-by event.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Reversal threshold on |overnight return|.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiguresArgs {
    /// term_structure, ltv_tradeoff, price_timeseries, tlp_histogram or all.
    #[arg(long, value_delimiter = ',')]
    pub which: Option<Vec<String>>,
    /// Safety buffer for capital efficiency.
    #[arg(long)]
    pub buffer: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Series for the histogram; defaults to the bundled dataset.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Other `FigureConfig` fields; config file only.
    #[arg(skip)]
    pub params: Option<toml::Table>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Compare every re-generated file with the recorded one.
    #[arg(long)]
    pub verify: bool,
}

/// Whole config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub format: Option<Format>,
    pub out_dir: Option<PathBuf>,
    pub price: PriceArgs,
    pub band: BandArgs,
    pub ltv_max: LtvMaxArgs,
    pub term_structure: TermStructureArgs,
    pub discrepancy: DiscrepancyArgs,
    pub simulate: SimulateArgs,
    pub backtest: BacktestArgs,
    pub proxies: ProxiesArgs,
    pub figures: FiguresArgs,
}

/// `flag.or(config)` for each listed field.
macro_rules! overlay {
    ($flags:expr, $cfg:expr; $($field:ident),+ $(,)?) => {{
        let mut out = $flags.clone();
        $( if out.$field.is_none() { out.$field = $cfg.$field.clone(); } )+
        out
    }};
}

impl PriceArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; close, mu, sigma, tau, days, drift, ltv, epsilon)
    }
}

impl BandArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; close, pi, ell)
    }
}

impl LtvMaxArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; epsilon, mu, sigma, tau, days)
    }
}

impl TermStructureArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; sigma_daily, days)
    }
}

impl DiscrepancyArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; close, sigmas, days, paths, seed)
    }
}

impl SimulateArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; preset, seed, n_seeds, n_days, policy, ltv, burn_in, gain_k,
            tlp_target, ltv_floor, ltv_ceiling, max_step, smoothing_alpha, event_log, overrides)
    }
}

impl BacktestArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; input, static_ltvs, dynamic, initial_ltv, window, fee_rate, controller)
    }
}

impl ProxiesArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; kind, input, bucket_by, events, threshold)
    }
}

impl FiguresArgs {
    pub fn overlay(&self, cfg: &Self) -> Self {
        overlay!(self, cfg; which, buffer, seed, series, params)
    }
}
