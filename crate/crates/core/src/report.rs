//! Data behind the standard figures: TLP term structure, the LTV trade-off
//! curve, a stress-week price series and the nightly TLP histogram.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backtest::{self, BacktestPolicy, HistogramBin, DEFAULT_VOL_WINDOW};
use crate::error::{check, Error, Result};
use crate::gap_model::{default_prob, DriftConvention, GapDistribution};
use crate::market_sim::{run_simulation, scenario_preset, DayRecord};
use crate::pricing::{term_structure, TermStructure, TRADING_DAYS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    TermStructure,
    LtvTradeoff,
    PriceTimeseries,
    TlpHistogram,
}

impl Figure {
    pub const ALL: [Figure; 4] = [
        Figure::TermStructure,
        Figure::LtvTradeoff,
        Figure::PriceTimeseries,
        Figure::TlpHistogram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::TermStructure => "term_structure",
            Figure::LtvTradeoff => "ltv_tradeoff",
            Figure::PriceTimeseries => "price_timeseries",
            Figure::TlpHistogram => "tlp_histogram",
        }
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "figure",
                name: s.to_string(),
                options: Figure::ALL.map(Figure::name).join(", "),
            })
    }
}

/// Figure parameters; defaults reproduce the standard set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureConfig {
    pub sigma_daily: Vec<f64>,
    pub days: Vec<f64>,
    pub ltv_grid: Vec<f64>,
    pub sigma_annual: f64,
    pub mu_annual: f64,
    /// Safety buffer as a fraction of collateral value.
    pub buffer: f64,
    pub preset: String,
    pub seed: u64,
    pub histogram_ltv: f64,
    pub vol_window: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        FigureConfig {
            sigma_daily: vec![0.0, 0.01, 0.02, 0.03],
            days: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            ltv_grid: vec![0.75, 0.80, 0.85, 0.90, 0.95, 1.0],
            sigma_annual: 0.3,
            mu_annual: 0.0,
            buffer: 0.0,
            preset: "news_crash_week".to_string(),
            seed: 1,
            histogram_ltv: 1.0,
            vol_window: DEFAULT_VOL_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub ltv: f64,
    /// Minted notional over collateral value net of the buffer.
    pub capital_efficiency: f64,
    pub default_prob: f64,
}

/// Capital efficiency and overnight default probability per LTV, under a
/// lognormal gap with median `e^{μτ}` (so `Pr(G < 1) = 0.5` at μ = 0).
pub fn ltv_tradeoff(
    ltvs: &[f64],
    mu_annual: f64,
    sigma_annual: f64,
    buffer: f64,
) -> Result<Vec<TradeoffRow>> {
    check(
        "buffer",
        buffer,
        (0.0..1.0).contains(&buffer),
        "a value in [0, 1)",
    )?;
    let dist = GapDistribution::lognormal_with(
        mu_annual,
        sigma_annual,
        1.0 / TRADING_DAYS_PER_YEAR,
        DriftConvention::LogDrift,
    )?;
    ltvs.iter()
        .map(|&ltv| {
            Ok(TradeoffRow {
                ltv,
                capital_efficiency: ltv / (1.0 - buffer),
                default_prob: default_prob(&dist, ltv)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "figure", rename_all = "snake_case")]
pub enum FigureData {
    TermStructure(TermStructure),
    LtvTradeoff {
        rows: Vec<TradeoffRow>,
    },
    PriceTimeseries {
        preset: String,
        records: Vec<DayRecord>,
    },
    TlpHistogram {
        n_nights: usize,
        mean_tlp: f64,
        median_tlp: f64,
        p95_tlp: f64,
        p99_tlp: f64,
        bins: Vec<HistogramBin>,
    },
}

/// Histogram input defaults to the bundled dataset.
pub fn figure_data(
    which: Figure,
    config: &FigureConfig,
    series: Option<&[backtest::OhlcRecord]>,
) -> Result<FigureData> {
    match which {
        Figure::TermStructure => Ok(FigureData::TermStructure(term_structure(
            &config.sigma_daily,
            &config.days,
        )?)),
        Figure::LtvTradeoff => Ok(FigureData::LtvTradeoff {
            rows: ltv_tradeoff(
                &config.ltv_grid,
                config.mu_annual,
                config.sigma_annual,
                config.buffer,
            )?,
        }),
        Figure::PriceTimeseries => {
            let sim = scenario_preset(&config.preset)?.with_seed(config.seed);
            Ok(FigureData::PriceTimeseries {
                preset: config.preset.clone(),
                records: run_simulation(&sim)?,
            })
        }
        Figure::TlpHistogram => {
            let bundled;
            let records = match series {
                Some(s) => s,
                None => {
                    bundled = backtest::bundled_series();
                    &bundled
                }
            };
            let r = backtest::replay(
                records,
                &BacktestPolicy::Static {
                    ltv: config.histogram_ltv,
                },
                config.vol_window,
                0.0,
            )?;
            Ok(FigureData::TlpHistogram {
                n_nights: r.n_nights,
                mean_tlp: r.mean_tlp,
                median_tlp: r.median_tlp,
                p95_tlp: r.p95_tlp,
                p99_tlp: r.p99_tlp,
                bins: r.histogram_bins,
            })
        }
    }
}
