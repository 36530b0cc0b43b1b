//! Observable stand-ins for the premium: ADR premium, futures basis,
//! pre-market gap, overnight move with intraday reversal, plus bucketed
//! aggregation.
//!
//! CSV schemas (header required, extra optional columns `instrument`,
//! `closure_hours`, `vol_bucket`):
//!
//! * ADR pairs: `date,adr_usd,fx,local_close`, where `fx` converts local
//!   currency to USD terms as in `adr·fx/local − 1`
//! * futures: `date,futures,carry,cash_close`
//! * equity opens: `date,prev_close,open,close`

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};

pub const DEFAULT_REVERSAL_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    AdrPremium,
    FuturesBasis,
    PremarketGap,
    OvernightReversal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyObservation {
    pub instrument: String,
    pub date: NaiveDate,
    pub kind: ProxyKind,
    /// Signed fraction.
    pub value: f64,
    pub closure_hours: f64,
    pub vol_bucket: String,
}

/// `adr·fx/local − 1`; positive when the ADR is rich against the stale
/// local close.
pub fn adr_premium(adr_price_usd: f64, fx_rate: f64, local_close: f64) -> Result<f64> {
    check("adr_price_usd", adr_price_usd, adr_price_usd > 0.0, "> 0")?;
    check("fx_rate", fx_rate, fx_rate > 0.0, "> 0")?;
    check("local_close", local_close, local_close > 0.0, "> 0")?;
    // difference first: exact for prices on a common decimal grid
    Ok((adr_price_usd * fx_rate - local_close) / local_close)
}

/// `futures·carry/prior_cash_close − 1`.
pub fn futures_basis(
    futures_price: f64,
    carry_adjustment: f64,
    prior_cash_close: f64,
) -> Result<f64> {
    check("futures_price", futures_price, futures_price > 0.0, "> 0")?;
    check(
        "carry_adjustment",
        carry_adjustment,
        carry_adjustment > 0.0,
        "> 0",
    )?;
    check(
        "prior_cash_close",
        prior_cash_close,
        prior_cash_close > 0.0,
        "> 0",
    )?;
    Ok((futures_price * carry_adjustment - prior_cash_close) / prior_cash_close)
}

/// Cost-of-carry growth factor `e^{(r − q)·τ}`. A futures quote embeds this
/// factor, so the adjustment to pass to [`futures_basis`] is its reciprocal.
pub fn carry_factor(rate: f64, dividend_yield: f64, tau_years: f64) -> Result<f64> {
    check("rate", rate, true, "a finite number")?;
    check("dividend_yield", dividend_yield, true, "a finite number")?;
    check("tau_years", tau_years, tau_years >= 0.0, ">= 0")?;
    Ok(libm::exp((rate - dividend_yield) * tau_years))
}

/// Indicative pre-market price against the prior close: `pre/prev − 1`.
pub fn premarket_gap(prev_close: f64, premarket_price: f64) -> Result<f64> {
    check("prev_close", prev_close, prev_close > 0.0, "> 0")?;
    check(
        "premarket_price",
        premarket_price,
        premarket_price > 0.0,
        "> 0",
    )?;
    Ok(premarket_price / prev_close - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reversal {
    pub overnight_ret: f64,
    pub intraday_ret: f64,
    pub reversal: bool,
}

/// Overnight and intraday returns; `reversal` when their signs oppose and
/// the overnight move exceeds `threshold` in absolute value.
pub fn overnight_reversal(
    prev_close: f64,
    open: f64,
    close: f64,
    threshold: f64,
) -> Result<Reversal> {
    check("prev_close", prev_close, prev_close > 0.0, "> 0")?;
    check("open", open, open > 0.0, "> 0")?;
    check("close", close, close > 0.0, "> 0")?;
    check("threshold", threshold, threshold >= 0.0, ">= 0")?;
    let overnight_ret = open / prev_close - 1.0;
    let intraday_ret = close / open - 1.0;
    Ok(Reversal {
        overnight_ret,
        intraday_ret,
        reversal: overnight_ret * intraday_ret < 0.0 && overnight_ret.abs() > threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum BucketBy {
    ClosureHours,
    VolBucket,
    /// Splits into `event` and `non_event` by date membership.
    Event {
        dates: BTreeSet<NaiveDate>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub bucket: String,
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

fn bucket_key(o: &ProxyObservation, by: &BucketBy) -> (u64, String) {
    match by {
        // numeric order for hours; the bit pattern of a non-negative f64
        // sorts like the value
        BucketBy::ClosureHours => (o.closure_hours.to_bits(), format!("{}", o.closure_hours)),
        BucketBy::VolBucket => (0, o.vol_bucket.clone()),
        BucketBy::Event { dates } => {
            if dates.contains(&o.date) {
                (0, "event".to_string())
            } else {
                (1, "non_event".to_string())
            }
        }
    }
}

/// Mean, median (average of the two middle values for even counts) and
/// count per bucket, in ascending bucket order.
pub fn aggregate_proxies(
    observations: &[ProxyObservation],
    by: &BucketBy,
) -> Result<Vec<BucketStats>> {
    if observations.is_empty() {
        return Err(Error::param(
            "observations",
            "cannot aggregate an empty set",
        ));
    }
    let mut groups: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    for o in observations {
        check("value", o.value, true, "a finite number")?;
        check(
            "closure_hours",
            o.closure_hours,
            o.closure_hours >= 0.0,
            ">= 0",
        )?;
        groups.entry(bucket_key(o, by)).or_default().push(o.value);
    }
    Ok(groups
        .into_iter()
        .map(|((_, bucket), mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            // sorted before summing so the mean does not depend on input order
            let mean = v.iter().sum::<f64>() / n as f64;
            let median = if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            };
            BucketStats {
                bucket,
                mean,
                median,
                count: n,
            }
        })
        .collect())
}

struct Meta {
    date: String,
    instrument: Option<String>,
    closure_hours: Option<f64>,
    vol_bucket: Option<String>,
}

macro_rules! row_meta {
    ($r:expr) => {
        Meta {
            date: $r.date,
            instrument: $r.instrument,
            closure_hours: $r.closure_hours,
            vol_bucket: $r.vol_bucket,
        }
    };
}

#[derive(Debug, Deserialize)]
struct AdrRow {
    date: String,
    #[serde(default)]
    instrument: Option<String>,
    #[serde(default)]
    closure_hours: Option<f64>,
    #[serde(default)]
    vol_bucket: Option<String>,
    adr_usd: f64,
    fx: f64,
    local_close: f64,
}

#[derive(Debug, Deserialize)]
struct FuturesRow {
    date: String,
    #[serde(default)]
    instrument: Option<String>,
    #[serde(default)]
    closure_hours: Option<f64>,
    #[serde(default)]
    vol_bucket: Option<String>,
    futures: f64,
    carry: f64,
    cash_close: f64,
}

#[derive(Debug, Deserialize)]
struct OpenRow {
    date: String,
    #[serde(default)]
    instrument: Option<String>,
    #[serde(default)]
    closure_hours: Option<f64>,
    #[serde(default)]
    vol_bucket: Option<String>,
    prev_close: f64,
    open: f64,
    close: f64,
}

fn observation(meta: Meta, line: u64, kind: ProxyKind, value: f64) -> Result<ProxyObservation> {
    let date =
        NaiveDate::parse_from_str(meta.date.trim(), "%Y-%m-%d").map_err(|e| Error::Data {
            context: "proxy csv".into(),
            line,
            message: format!("bad date `{}`: {e}", meta.date),
        })?;
    Ok(ProxyObservation {
        instrument: meta.instrument.unwrap_or_else(|| "default".to_string()),
        date,
        kind,
        value,
        closure_hours: meta.closure_hours.unwrap_or(0.0),
        vol_bucket: meta.vol_bucket.unwrap_or_else(|| "all".to_string()),
    })
}

fn read_rows<T, R, F>(input: R, mut f: F) -> Result<Vec<ProxyObservation>>
where
    T: serde::de::DeserializeOwned,
    R: Read,
    F: FnMut(T, u64) -> Result<ProxyObservation>,
{
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<T>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Data {
            context: "proxy csv".into(),
            line,
            message: e.to_string(),
        })?;
        out.push(f(row, line).map_err(|e| match e {
            Error::Parameter { name, reason } => Error::Data {
                context: "proxy csv".into(),
                line,
                message: format!("{name}: {reason}"),
            },
            other => other,
        })?);
    }
    Ok(out)
}

pub fn parse_adr_csv<R: Read>(input: R) -> Result<Vec<ProxyObservation>> {
    read_rows(input, |r: AdrRow, line| {
        let v = adr_premium(r.adr_usd, r.fx, r.local_close)?;
        observation(row_meta!(r), line, ProxyKind::AdrPremium, v)
    })
}

pub fn parse_futures_csv<R: Read>(input: R) -> Result<Vec<ProxyObservation>> {
    read_rows(input, |r: FuturesRow, line| {
        let v = futures_basis(r.futures, r.carry, r.cash_close)?;
        observation(row_meta!(r), line, ProxyKind::FuturesBasis, v)
    })
}

/// Equity opens yield two observations per row: the pre-market/overnight gap
/// and, when flagged, the intraday give-back.
pub fn parse_opens_csv<R: Read>(input: R, threshold: f64) -> Result<Vec<ProxyObservation>> {
    let mut out = Vec::new();
    let rows = read_rows(input, |r: OpenRow, line| {
        let rev = overnight_reversal(r.prev_close, r.open, r.close, threshold)?;
        let gap = observation(
            row_meta!(r),
            line,
            ProxyKind::PremarketGap,
            rev.overnight_ret,
        )?;
        let mut give_back = gap.clone();
        give_back.kind = ProxyKind::OvernightReversal;
        give_back.value = if rev.reversal {
            -rev.intraday_ret * rev.overnight_ret.signum()
        } else {
            0.0
        };
        out.push(give_back);
        Ok(gap)
    })?;
    // interleave: gap row then its reversal row
    Ok(rows
        .into_iter()
        .zip(out)
        .flat_map(|(a, b)| [a, b])
        .collect())
}

/// Parses a one-column (`date`) CSV of event dates.
pub fn parse_event_dates<R: Read>(input: R) -> Result<BTreeSet<NaiveDate>> {
    #[derive(Deserialize)]
    struct Row {
        date: String,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = BTreeSet::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Data {
            context: "event dates".into(),
            line,
            message: e.to_string(),
        })?;
        let d =
            NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d").map_err(|e| Error::Data {
                context: "event dates".into(),
                line,
                message: format!("bad date `{}`: {e}", row.date),
            })?;
        out.insert(d);
    }
    Ok(out)
}
