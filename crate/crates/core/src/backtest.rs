//! Historical replay of close → next-open gaps through the vault engine and
//! the LTV controller.
//!
//! Input CSV schema (header required):
//!
//! ```text
//! date,close,next_open
//! 2018-01-02,100.0000,100.2113
//! ```
//!
//! `date` is ISO `YYYY-MM-DD`; each row is one night. The premium reported
//! here is model-implied: no historical stablecoin market exists, so each
//! night's TLP is the fair discount of a unit minted at that night's LTV,
//! priced under a martingale lognormal gap whose volatility is estimated
//! from trailing realized gaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, LtvController};
use crate::error::{check, Error, Result};
use crate::exec::{aux_rng, map_jobs, Exec};
use crate::gap_model::GapDistribution;
use crate::pricing::{expected_redemption, TRADING_DAYS_PER_YEAR};
use crate::vault::{BidderDemand, EngineConfig, VaultEngine, VaultStatus};

pub const DEFAULT_VOL_WINDOW: usize = 60;
pub const HISTOGRAM_BINS: usize = 40;
/// LTVs whose realized default counts every report carries.
pub const STATIC_LTV_GRID: [f64; 5] = [0.80, 0.85, 0.90, 0.95, 1.0];

/// Synthetic 1,250-night dataset shipped with the crate, produced by
/// `synthetic_series(SYNTHETIC_SEED, 1250)`.
pub const BUNDLED_SERIES: &str = include_str!("../data/synthetic_1250.csv");
pub const SYNTHETIC_SEED: u64 = 20_180_102;

/// Auction bidders in replays pay at most `open·(1 − discount)`.
const LIQUIDATION_DISCOUNT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcRecord {
    pub date: NaiveDate,
    pub close: f64,
    pub next_open: f64,
}

impl OhlcRecord {
    pub fn gap(&self) -> f64 {
        self.next_open / self.close
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub records: Vec<OhlcRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    date: String,
    close: String,
    next_open: String,
}

fn parse_price(field: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Data {
        context: "series".into(),
        line,
        message: format!("{name} `{field}` is not a number"),
    })?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Data {
            context: "series".into(),
            line,
            message: format!("{name} must be a positive price, got {v}"),
        });
    }
    Ok(v)
}

/// Parses and validates a series. Rows out of date order are sorted with a
/// warning; duplicate dates are rejected.
pub fn parse_series<R: Read>(input: R) -> Result<LoadedSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Data {
        context: "series".into(),
        line: 1,
        message: e.to_string(),
    })?;
    for required in ["date", "close", "next_open"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Data {
                context: "series".into(),
                line: 1,
                message: format!("missing column `{required}` (expected date,close,next_open)"),
            });
        }
    }
    let mut records = Vec::new();
    for row in reader.deserialize::<RawRow>() {
        let row = row.map_err(|e| Error::Data {
            context: "series".into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = records.len() as u64 + 2;
        let date =
            NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d").map_err(|e| Error::Data {
                context: "series".into(),
                line,
                message: format!("bad date `{}`: {e}", row.date),
            })?;
        records.push(OhlcRecord {
            date,
            close: parse_price(&row.close, "close", line)?,
            next_open: parse_price(&row.next_open, "next_open", line)?,
        });
    }
    let mut warnings = Vec::new();
    if records.windows(2).any(|w| w[1].date < w[0].date) {
        records.sort_by_key(|r| r.date);
        warnings.push("dates were not in increasing order; records sorted by date".to_string());
    }
    if let Some(w) = records.windows(2).find(|w| w[1].date == w[0].date) {
        return Err(Error::Data {
            context: "series".into(),
            line: 0,
            message: format!("duplicate date {}", w[0].date),
        });
    }
    Ok(LoadedSeries { records, warnings })
}

pub fn load_series(path: &Path) -> Result<LoadedSeries> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_series(file)
}

/// The bundled synthetic dataset.
pub fn bundled_series() -> Vec<OhlcRecord> {
    parse_series(BUNDLED_SERIES.as_bytes())
        .expect("bundled series is valid")
        .records
}

/// Writes records in the input schema with four decimals.
pub fn write_series_csv(records: &[OhlcRecord]) -> String {
    let mut out = String::from("date,close,next_open\n");
    for r in records {
        let _ = writeln!(out, "{},{:.4},{:.4}", r.date, r.close, r.next_open);
    }
    out
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut d = d.succ_opt().expect("date in range");
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.succ_opt().expect("date in range");
    }
    d
}

/// Deterministic synthetic series: business days from 2018-01-02, a calm and
/// a volatile regime (Markov switching), occasional news jumps, and one −20%
/// crash night at 70% of the sample. Prices are rounded to 1e-4.
pub fn synthetic_series(seed: u64, n: usize) -> Vec<OhlcRecord> {
    const CALM_NIGHT_SD: f64 = 0.007;
    const HOT_NIGHT_SD: f64 = 0.016;
    const INTRADAY_SD: f64 = 0.012;
    const P_ENTER_HOT: f64 = 0.02;
    const P_LEAVE_HOT: f64 = 0.08;
    const JUMP_PROB: f64 = 0.02;
    const JUMP_SD: f64 = 0.04;

    let mut rng = aux_rng(seed, 1);
    let crash_night = n * 7 / 10;
    let mut date = NaiveDate::from_ymd_opt(2018, 1, 2).expect("valid date");
    let mut close = 100.0_f64;
    let mut hot = false;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u_regime: f64 = rng.random();
        let u_jump: f64 = rng.random();
        let z_night: f64 = rng.sample(StandardNormal);
        let z_jump: f64 = rng.sample(StandardNormal);
        let z_day: f64 = rng.sample(StandardNormal);
        hot = if hot {
            u_regime >= P_LEAVE_HOT
        } else {
            u_regime < P_ENTER_HOT
        };
        let sd = if hot { HOT_NIGHT_SD } else { CALM_NIGHT_SD };
        let mut log_gap = -0.5 * sd * sd + sd * z_night;
        if u_jump < JUMP_PROB {
            log_gap += JUMP_SD * z_jump;
        }
        if i == crash_night {
            log_gap = libm::log(0.80);
        }
        let next_open = round4(close * libm::exp(log_gap));
        out.push(OhlcRecord {
            date,
            close,
            next_open,
        });
        let day = -0.5 * INTRADAY_SD * INTRADAY_SD + INTRADAY_SD * z_day;
        close = round4(next_open * libm::exp(day));
        date = next_business_day(date);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BacktestPolicy {
    Static {
        ltv: f64,
    },
    Dynamic {
        controller: ControllerConfig,
        initial_ltv: f64,
    },
}

impl BacktestPolicy {
    pub fn label(&self) -> String {
        match self {
            BacktestPolicy::Static { ltv } => format!("static_{ltv:.4}"),
            BacktestPolicy::Dynamic { .. } => "dynamic".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightRow {
    pub date: NaiveDate,
    pub close: f64,
    pub next_open: f64,
    pub sigma_annual: f64,
    pub ltv: f64,
    /// Model-implied premium.
    pub tlp: f64,
    /// Stablecoins minted per share of collateral.
    pub supply: f64,
    pub defaulted: bool,
    pub holder_payout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub policy: String,
    pub tlp_kind: String,
    pub n_nights: usize,
    pub vol_window: usize,
    pub mean_tlp: f64,
    pub median_tlp: f64,
    pub p95_tlp: f64,
    pub p99_tlp: f64,
    /// Defaults under this report's policy.
    pub default_count: usize,
    pub default_dates: Vec<NaiveDate>,
    /// Realized default counts for each LTV of [`STATIC_LTV_GRID`], keyed by
    /// the LTV with four decimals.
    pub default_count_static: BTreeMap<String, usize>,
    pub mean_supply: f64,
    pub fee_revenue: f64,
    pub fund_draws: f64,
    pub min_holder_payout: f64,
    pub histogram_bins: Vec<HistogramBin>,
    pub supply_series: Vec<f64>,
    pub nights: Vec<NightRow>,
}

/// 1-based nearest-rank index `⌈p·n/100⌉`, at least 1.
pub fn nearest_rank(n: usize, p: f64) -> usize {
    let r = (p / 100.0 * n as f64).ceil() as usize;
    r.clamp(1, n.max(1))
}

/// Nearest-rank percentile of already sorted values.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    sorted[nearest_rank(sorted.len(), p) - 1]
}

/// `bins` equal-width bins spanning `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_low: lo + i as f64 * width,
            bin_high: if i + 1 == bins {
                hi
            } else {
                lo + (i + 1) as f64 * width
            },
            count,
        })
        .collect()
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Annualized trailing volatility available before each night: the sample
/// sd of the previous `window` log gaps (fewer while history builds up; the
/// first two nights reuse the first window's estimate).
pub fn trailing_vol(records: &[OhlcRecord], window: usize) -> Vec<f64> {
    let logs: Vec<f64> = records.iter().map(|r| libm::log(r.gap())).collect();
    let annualize = TRADING_DAYS_PER_YEAR.sqrt();
    let seed = sample_sd(&logs[..window.min(logs.len())]) * annualize;
    (0..logs.len())
        .map(|i| {
            if i < 2 {
                seed
            } else {
                sample_sd(&logs[i.saturating_sub(window)..i]) * annualize
            }
        })
        .collect()
}

/// Fair discount of one unit minted at `ltv` under a martingale lognormal
/// overnight gap.
pub fn model_tlp(sigma_annual: f64, ltv: f64) -> Result<f64> {
    let dist = GapDistribution::lognormal(0.0, sigma_annual, 1.0 / TRADING_DAYS_PER_YEAR)?;
    Ok(1.0 - expected_redemption(&dist, 1.0, ltv)?)
}

pub fn replay(
    records: &[OhlcRecord],
    policy: &BacktestPolicy,
    vol_window: usize,
    fee_rate: f64,
) -> Result<BacktestReport> {
    if vol_window < 2 {
        return Err(Error::param("vol_window", "need at least 2 nights"));
    }
    if records.len() < vol_window + 1 {
        return Err(Error::InsufficientHistory {
            required: vol_window + 1,
            actual: records.len(),
        });
    }
    check("fee_rate", fee_rate, fee_rate >= 0.0, ">= 0")?;
    let mut controller = match policy {
        BacktestPolicy::Static { ltv } => {
            check("ltv", *ltv, *ltv > 0.0 && *ltv <= 1.0, "a value in (0, 1]")?;
            None
        }
        BacktestPolicy::Dynamic {
            controller,
            initial_ltv,
        } => Some(LtvController::new(controller.clone(), *initial_ltv)?),
    };

    let sigmas = trailing_vol(records, vol_window);
    let mut engine = VaultEngine::new(EngineConfig::default(), records[0].close, 0.0)?;
    let mut nights = Vec::with_capacity(records.len());
    let mut fee_revenue = 0.0;
    let mut fund_draws = 0.0;
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            engine.close(r.close)?;
        }
        let ltv = match (&controller, policy) {
            (Some(c), _) => c.ltv(),
            (None, BacktestPolicy::Static { ltv }) => *ltv,
            (None, _) => unreachable!(),
        };
        let tlp = model_tlp(sigmas[i], ltv)?;
        let (id, minted) = engine.mint(1.0, ltv, fee_rate)?;
        engine.open(r.next_open)?;
        let status = engine.expire_and_detect_default(id, false)?;
        let (defaulted, holder_payout) = match status {
            VaultStatus::Active => {
                let fee = engine.position(id)?.fee_owed();
                engine.redeem(id, minted, fee)?;
                fee_revenue += fee;
                (false, 1.0)
            }
            VaultStatus::Defaulted { auction_id } => {
                engine.run_auction(
                    auction_id,
                    &[BidderDemand {
                        bidder: "market".into(),
                        max_price: r.next_open * (1.0 - LIQUIDATION_DISCOUNT),
                        quantity: 1.0,
                    }],
                )?;
                let s = engine.settle_default(id)?;
                fund_draws += s.fund_draw;
                (true, s.holder_payout_per_unit)
            }
            VaultStatus::Repaid => unreachable!("fresh vault cannot be repaid"),
        };
        if let Some(c) = controller.as_mut() {
            c.update(tlp)?;
        }
        nights.push(NightRow {
            date: r.date,
            close: r.close,
            next_open: r.next_open,
            sigma_annual: sigmas[i],
            ltv,
            tlp,
            supply: minted,
            defaulted,
            holder_payout,
        });
    }

    let n = nights.len();
    let tlps: Vec<f64> = nights.iter().map(|x| x.tlp).collect();
    let mut sorted = tlps.clone();
    sorted.sort_by(f64::total_cmp);
    let default_count_static = STATIC_LTV_GRID
        .iter()
        .map(|&l| {
            let c = records.iter().filter(|r| r.next_open < l * r.close).count();
            (format!("{l:.4}"), c)
        })
        .collect();
    Ok(BacktestReport {
        policy: policy.label(),
        tlp_kind: "model_implied".to_string(),
        n_nights: n,
        vol_window,
        mean_tlp: tlps.iter().sum::<f64>() / n as f64,
        median_tlp: percentile_sorted(&sorted, 50.0),
        p95_tlp: percentile_sorted(&sorted, 95.0),
        p99_tlp: percentile_sorted(&sorted, 99.0),
        default_count: nights.iter().filter(|x| x.defaulted).count(),
        default_dates: nights
            .iter()
            .filter(|x| x.defaulted)
            .map(|x| x.date)
            .collect(),
        default_count_static,
        mean_supply: nights.iter().map(|x| x.supply).sum::<f64>() / n as f64,
        fee_revenue,
        fund_draws,
        min_holder_payout: nights.iter().map(|x| x.holder_payout).fold(1.0, f64::min),
        histogram_bins: histogram(&tlps, HISTOGRAM_BINS),
        supply_series: nights.iter().map(|x| x.supply).collect(),
        nights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub defaults: usize,
    pub mean_supply: f64,
    pub mean_tlp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<BacktestReport>,
}

/// One replay per static LTV plus the dynamic policy (if given), run in
/// parallel under [`Exec::Parallel`]. The dynamic row comes last.
pub fn compare_policies(
    exec: Exec,
    records: &[OhlcRecord],
    static_ltvs: &[f64],
    dynamic: Option<(&ControllerConfig, f64)>,
    vol_window: usize,
    fee_rate: f64,
) -> Result<PolicyComparison> {
    let mut policies: Vec<BacktestPolicy> = static_ltvs
        .iter()
        .map(|&ltv| BacktestPolicy::Static { ltv })
        .collect();
    if let Some((controller, initial_ltv)) = dynamic {
        policies.push(BacktestPolicy::Dynamic {
            controller: controller.clone(),
            initial_ltv,
        });
    }
    let reports = map_jobs(exec, &policies, |p| {
        replay(records, p, vol_window, fee_rate)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            policy: r.policy.clone(),
            defaults: r.default_count,
            mean_supply: r.mean_supply,
            mean_tlp: r.mean_tlp,
        })
        .collect();
    Ok(PolicyComparison { rows, reports })
}
