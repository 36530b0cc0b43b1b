//! Fully resolved command requests. A request holds every input the
//! command needs (defaults, config file and flags already merged), is
//! recorded in the run manifest, and re-executes to the same bytes.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use timebound_core::backtest::{
    self, compare_policies, OhlcRecord, DEFAULT_VOL_WINDOW, STATIC_LTV_GRID,
};
use timebound_core::controller::ControllerConfig;
use timebound_core::gap_model::{DriftConvention, GapDistribution};
use timebound_core::market_sim::{
    self, scenario_preset, summarize, LtvPolicy, SimConfig, BURN_IN_DAYS,
};
use timebound_core::pricing::{self, PricingInputs, TRADING_DAYS_PER_YEAR};
use timebound_core::proxies::{self, BucketBy};
use timebound_core::report::{figure_data, Figure, FigureConfig, FigureData};
use timebound_core::Exec;

use crate::args::*;
use crate::output::{csv_rows, json_bytes, render, with_columns, Output};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicSpec {
    pub controller: ControllerConfig,
    pub initial_ltv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Request {
    Price {
        inputs: PricingInputs,
    },
    Band {
        close: f64,
        pi: f64,
        ell: f64,
    },
    LtvMax {
        epsilon: f64,
        mu_annual: f64,
        sigma_annual: f64,
        tau_years: f64,
    },
    TermStructure {
        sigma_daily: Vec<f64>,
        days: Vec<f64>,
    },
    Discrepancy {
        close: f64,
        sigmas: Vec<f64>,
        days: Vec<f64>,
        paths: usize,
        seed: u64,
    },
    Simulate {
        preset: String,
        seeds: Vec<u64>,
        burn_in: usize,
        event_log: bool,
        config: SimConfig,
    },
    Backtest {
        /// `None` means the bundled dataset.
        input: Option<PathBuf>,
        static_ltvs: Vec<f64>,
        dynamic: Option<DynamicSpec>,
        vol_window: usize,
        fee_rate: f64,
    },
    Proxies {
        kind: ProxyKindArg,
        input: PathBuf,
        bucket_by: BucketArg,
        events: Option<PathBuf>,
        threshold: f64,
    },
    Figures {
        which: Vec<Figure>,
        config: FigureConfig,
        series: Option<PathBuf>,
    },
}

impl Request {
    pub fn command(&self) -> &'static str {
        match self {
            Request::Price { .. } => "price",
            Request::Band { .. } => "band",
            Request::LtvMax { .. } => "ltv-max",
            Request::TermStructure { .. } => "term-structure",
            Request::Discrepancy { .. } => "discrepancy",
            Request::Simulate { .. } => "simulate",
            Request::Backtest { .. } => "backtest",
            Request::Proxies { .. } => "proxies",
            Request::Figures { .. } => "figures",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Request::Discrepancy { seed, .. } => vec![*seed],
            Request::Simulate { seeds, .. } => seeds.clone(),
            Request::Figures { which, config, .. } if which.contains(&Figure::PriceTimeseries) => {
                vec![config.seed]
            }
            _ => Vec::new(),
        }
    }
}

fn tau_from(tau: Option<f64>, days: Option<f64>) -> f64 {
    tau.unwrap_or_else(|| days.unwrap_or(1.0) / TRADING_DAYS_PER_YEAR)
}

/// Overlays a TOML table onto a serializable value, field by field.
fn merge_table<T>(base: &T, table: Option<&toml::Table>) -> Result<T>
where
    T: Serialize + serde::de::DeserializeOwned,
{
    fn merge(dst: &mut Value, src: Value) {
        match (dst, src) {
            (Value::Object(d), Value::Object(s)) => {
                for (k, v) in s {
                    match d.get_mut(&k) {
                        Some(slot) => merge(slot, v),
                        None => {
                            d.insert(k, v);
                        }
                    }
                }
            }
            (slot, v) => *slot = v,
        }
    }
    let mut v = serde_json::to_value(base)?;
    if let Some(t) = table {
        merge(&mut v, serde_json::to_value(t)?);
    }
    Ok(serde_json::from_value(v)?)
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("missing required argument --{flag}"))
}

pub fn resolve(command: &Command, cfg: &ConfigFile) -> Result<Request> {
    Ok(match command {
        Command::Price(a) => {
            let a = a.overlay(&cfg.price);
            let drift = match a.drift.unwrap_or(DriftArg::Martingale) {
                DriftArg::Martingale => DriftConvention::Martingale,
                DriftArg::LogDrift => DriftConvention::LogDrift,
            };
            Request::Price {
                inputs: PricingInputs {
                    close_price: a.close.unwrap_or(100.0),
                    dist: GapDistribution::Lognormal {
                        mu_annual: a.mu.unwrap_or(0.0),
                        sigma_annual: a.sigma.unwrap_or(0.3),
                        tau_years: tau_from(a.tau, a.days),
                        drift,
                    },
                    ltv: a.ltv.unwrap_or(0.9),
                    epsilon: a.epsilon.unwrap_or(0.01),
                },
            }
        }
        Command::Band(a) => {
            let a = a.overlay(&cfg.band);
            Request::Band {
                close: a.close.unwrap_or(100.0),
                pi: require(a.pi, "pi")?,
                ell: require(a.ell, "ell")?,
            }
        }
        Command::LtvMax(a) => {
            let a = a.overlay(&cfg.ltv_max);
            Request::LtvMax {
                epsilon: a.epsilon.unwrap_or(0.01),
                mu_annual: a.mu.unwrap_or(0.0),
                sigma_annual: a.sigma.unwrap_or(0.3),
                tau_years: tau_from(a.tau, a.days),
            }
        }
        Command::TermStructure(a) => {
            let a = a.overlay(&cfg.term_structure);
            let d = FigureConfig::default();
            Request::TermStructure {
                sigma_daily: a.sigma_daily.unwrap_or(d.sigma_daily),
                days: a.days.unwrap_or(d.days),
            }
        }
        Command::Discrepancy(a) => {
            let a = a.overlay(&cfg.discrepancy);
            Request::Discrepancy {
                close: a.close.unwrap_or(100.0),
                sigmas: a.sigmas.unwrap_or_else(|| vec![0.1, 0.3, 0.6]),
                days: a.days.unwrap_or_else(|| vec![1.0, 3.0]),
                paths: a.paths.unwrap_or(1_000_000),
                seed: a.seed.unwrap_or(42),
            }
        }
        Command::Simulate(a) => {
            let a = a.overlay(&cfg.simulate);
            let preset = a.preset.clone().unwrap_or_else(|| "base".to_string());
            let mut config = merge_table(&scenario_preset(&preset)?, a.overrides.as_ref())?;
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            if let Some(n) = a.n_days {
                config.n_days = n;
            }
            let c = &mut config.controller;
            macro_rules! set {
                ($flag:ident => $field:ident) => {
                    if let Some(v) = a.$flag {
                        c.$field = v;
                    }
                };
            }
            set!(gain_k => gain_k);
            set!(tlp_target => tlp_target);
            set!(ltv_floor => ltv_floor);
            set!(ltv_ceiling => ltv_ceiling);
            set!(max_step => max_step_per_update);
            set!(smoothing_alpha => smoothing_alpha);
            match a.policy {
                Some(PolicyArg::Static) => {
                    config.policy = LtvPolicy::Static {
                        ltv: a.ltv.unwrap_or(config.controller.ltv_ceiling),
                    }
                }
                Some(PolicyArg::Dynamic) => config.policy = LtvPolicy::Dynamic,
                None => {
                    if let Some(ltv) = a.ltv {
                        config.policy = LtvPolicy::Static { ltv };
                    }
                }
            }
            let n_seeds = a.n_seeds.unwrap_or(1).max(1);
            let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| config.seed + i).collect();
            Request::Simulate {
                preset,
                event_log: a.event_log.unwrap_or(n_seeds == 1),
                burn_in: a.burn_in.unwrap_or(BURN_IN_DAYS),
                seeds,
                config,
            }
        }
        Command::Backtest(a) => {
            let a = a.overlay(&cfg.backtest);
            let controller = merge_table(&ControllerConfig::default(), a.controller.as_ref())?;
            Request::Backtest {
                input: a.input.clone(),
                static_ltvs: a.static_ltvs.unwrap_or_else(|| STATIC_LTV_GRID.to_vec()),
                dynamic: a.dynamic.unwrap_or(true).then(|| DynamicSpec {
                    initial_ltv: a.initial_ltv.unwrap_or(0.9),
                    controller,
                }),
                vol_window: a.window.unwrap_or(DEFAULT_VOL_WINDOW),
                fee_rate: a.fee_rate.unwrap_or(0.001),
            }
        }
        Command::Proxies(a) => {
            let a = a.overlay(&cfg.proxies);
            let bucket_by = a.bucket_by.unwrap_or(BucketArg::ClosureHours);
            if bucket_by == BucketArg::Event && a.events.is_none() {
                bail!("--bucket-by event needs --events <csv>");
            }
            Request::Proxies {
                kind: require(a.kind, "kind")?,
                input: require(a.input.clone(), "input")?,
                bucket_by,
                events: a.events.clone(),
                threshold: a.threshold.unwrap_or(proxies::DEFAULT_REVERSAL_THRESHOLD),
            }
        }
        Command::Figures(a) => {
            let a = a.overlay(&cfg.figures);
            let mut config = merge_table(&FigureConfig::default(), a.params.as_ref())?;
            if let Some(b) = a.buffer {
                config.buffer = b;
            }
            if let Some(s) = a.seed {
                config.seed = s;
            }
            let names = a.which.unwrap_or_else(|| vec!["all".to_string()]);
            let mut which = Vec::new();
            for n in &names {
                if n == "all" {
                    which.extend(Figure::ALL);
                } else {
                    which.push(n.parse::<Figure>()?);
                }
            }
            which.dedup();
            Request::Figures {
                which,
                config,
                series: a.series.clone(),
            }
        }
        Command::Replay(_) => bail!("replay is resolved from its manifest"),
    })
}

fn load_records(path: Option<&Path>, out: &mut Output) -> Result<Vec<OhlcRecord>> {
    match path {
        None => Ok(backtest::bundled_series()),
        Some(p) => {
            let loaded = backtest::load_series(p)?;
            out.warnings.extend(
                loaded
                    .warnings
                    .iter()
                    .map(|w| format!("{}: {w}", p.display())),
            );
            Ok(loaded.records)
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

pub fn execute(req: &Request, exec: Exec, format: Format) -> Result<Output> {
    let ext = format.ext();
    let mut out = Output::default();
    match req {
        Request::Price { inputs } => {
            let r = pricing::price(inputs)?;
            out.push_main(
                format!("price.{ext}"),
                render(format, &[&r], &json!({"inputs": inputs, "result": r}))?,
            );
        }
        Request::Band { close, pi, ell } => {
            let (lower, upper) = pricing::no_arb_band(*close, *pi, *ell)?;
            let row = json!({
                "close": close, "pi": pi, "ell": ell,
                "fair_price": pricing::fair_price(*close, *pi, *ell)?,
                "band_lower": lower, "band_upper": upper,
            });
            out.push_main(format!("band.{ext}"), render(format, &[&row], &row)?);
        }
        Request::LtvMax {
            epsilon,
            mu_annual,
            sigma_annual,
            tau_years,
        } => {
            let row = json!({
                "epsilon": epsilon, "mu_annual": mu_annual,
                "sigma_annual": sigma_annual, "tau_years": tau_years,
                "ltv_max": pricing::max_ltv(*epsilon, *mu_annual, *sigma_annual, *tau_years)?,
            });
            out.push_main(format!("ltv_max.{ext}"), render(format, &[&row], &row)?);
        }
        Request::TermStructure { sigma_daily, days } => {
            let ts = pricing::term_structure(sigma_daily, days)?;
            out.push_main(
                format!("term_structure.{ext}"),
                term_structure_bytes(format, &ts)?,
            );
        }
        Request::Discrepancy {
            close,
            sigmas,
            days,
            paths,
            seed,
        } => {
            let taus: Vec<f64> = days.iter().map(|d| d / TRADING_DAYS_PER_YEAR).collect();
            let rows = pricing::discrepancy_report(exec, *close, sigmas, &taus, *paths, *seed)?;
            out.push_main(format!("discrepancy.{ext}"), render(format, &rows, &rows)?);
        }
        Request::Simulate {
            seeds,
            burn_in,
            event_log,
            config,
            ..
        } => simulate(&mut out, exec, format, config, seeds, *burn_in, *event_log)?,
        Request::Backtest {
            input,
            static_ltvs,
            dynamic,
            vol_window,
            fee_rate,
        } => {
            let records = load_records(input.as_deref(), &mut out)?;
            let cmp = compare_policies(
                exec,
                &records,
                static_ltvs,
                dynamic.as_ref().map(|d| (&d.controller, d.initial_ltv)),
                *vol_window,
                *fee_rate,
            )?;
            match format {
                Format::Json => {
                    out.push("backtest.json", json_bytes(&cmp)?);
                    out.stdout = String::from_utf8(json_bytes(&cmp.rows)?)?;
                }
                Format::Csv => {
                    let summary: Vec<Value> = cmp
                        .reports
                        .iter()
                        .map(|r| {
                            let mut v = json!({
                                "policy": r.policy, "tlp_kind": r.tlp_kind, "n_nights": r.n_nights,
                                "mean_tlp": r.mean_tlp, "median_tlp": r.median_tlp,
                                "p95_tlp": r.p95_tlp, "p99_tlp": r.p99_tlp,
                                "default_count": r.default_count, "mean_supply": r.mean_supply,
                                "fee_revenue": r.fee_revenue, "fund_draws": r.fund_draws,
                                "min_holder_payout": r.min_holder_payout,
                            });
                            for (ltv, c) in &r.default_count_static {
                                v[format!("defaults_at_{ltv}")] = json!(c);
                            }
                            v
                        })
                        .collect();
                    let mut hist = Vec::new();
                    let mut nights = Vec::new();
                    for r in &cmp.reports {
                        let p = [("policy", json!(r.policy))];
                        for b in &r.histogram_bins {
                            hist.push(with_columns(&p, b)?);
                        }
                        for n in &r.nights {
                            nights.push(with_columns(&p, n)?);
                        }
                    }
                    out.push_main("backtest_summary.csv", csv_rows(&summary)?);
                    out.push("backtest_histogram.csv", csv_rows(&hist)?);
                    out.push("backtest_nights.csv", csv_rows(&nights)?);
                }
            }
        }
        Request::Proxies {
            kind,
            input,
            bucket_by,
            events,
            threshold,
        } => {
            let obs = match kind {
                ProxyKindArg::Adr => proxies::parse_adr_csv(open(input)?)?,
                ProxyKindArg::Futures => proxies::parse_futures_csv(open(input)?)?,
                ProxyKindArg::Opens => proxies::parse_opens_csv(open(input)?, *threshold)?,
            };
            let by = match bucket_by {
                BucketArg::ClosureHours => BucketBy::ClosureHours,
                BucketArg::VolBucket => BucketBy::VolBucket,
                BucketArg::Event => {
                    let path = events
                        .as_ref()
                        .context("--bucket-by event needs --events")?;
                    BucketBy::Event {
                        dates: proxies::parse_event_dates(open(path)?)?,
                    }
                }
            };
            // one table per proxy kind present in the file
            let kinds: BTreeSet<_> = obs.iter().map(|o| o.kind).collect();
            let mut buckets = Vec::new();
            for k in kinds {
                let subset: Vec<_> = obs.iter().filter(|o| o.kind == k).cloned().collect();
                for b in proxies::aggregate_proxies(&subset, &by)? {
                    buckets.push(with_columns(&[("kind", serde_json::to_value(k)?)], &b)?);
                }
            }
            out.push(
                format!("proxies_observations.{ext}"),
                render(format, &obs, &obs)?,
            );
            out.push_main(
                format!("proxies_buckets.{ext}"),
                render(format, &buckets, &buckets)?,
            );
        }
        Request::Figures {
            which,
            config,
            series,
        } => {
            let records = match series {
                Some(p) => Some(load_records(Some(p), &mut out)?),
                None => None,
            };
            for &f in which {
                let data = figure_data(f, config, records.as_deref())?;
                let name = format!("figure_{}.{ext}", f.name());
                let bytes = match (&data, format) {
                    (_, Format::Json) => json_bytes(&data)?,
                    (FigureData::TermStructure(ts), Format::Csv) => {
                        term_structure_bytes(format, ts)?
                    }
                    (FigureData::LtvTradeoff { rows }, Format::Csv) => csv_rows(rows)?,
                    (FigureData::PriceTimeseries { records, .. }, Format::Csv) => {
                        csv_rows(records)?
                    }
                    (FigureData::TlpHistogram { bins, .. }, Format::Csv) => csv_rows(bins)?,
                };
                if let (FigureData::TlpHistogram { .. }, Format::Csv) = (&data, format) {
                    let Value::Object(mut m) = serde_json::to_value(&data)? else {
                        unreachable!()
                    };
                    m.shift_remove("bins");
                    m.shift_remove("figure");
                    out.push("figure_tlp_histogram_stats.csv", csv_rows(&[m])?);
                }
                out.stdout.push_str(&format!("{name}\n"));
                out.push(name, bytes);
            }
        }
    }
    Ok(out)
}

fn term_structure_bytes(format: Format, ts: &pricing::TermStructure) -> Result<Vec<u8>> {
    match format {
        Format::Json => json_bytes(ts),
        Format::Csv => {
            let mut rows = Vec::new();
            for (i, s) in ts.sigma_daily.iter().enumerate() {
                for (j, d) in ts.days.iter().enumerate() {
                    rows.push(json!({"sigma_daily": s, "days": d, "tlp": ts.tlp[i][j]}));
                }
            }
            csv_rows(&rows)
        }
    }
}

fn simulate(
    out: &mut Output,
    exec: Exec,
    format: Format,
    config: &SimConfig,
    seeds: &[u64],
    burn_in: usize,
    event_log: bool,
) -> Result<()> {
    let ext = format.ext();
    if seeds.len() == 1 {
        let cfg = config.with_seed(seeds[0]);
        let run = market_sim::simulate(&cfg)?;
        let summary = summarize(&run.records, burn_in);
        out.push(
            format!("simulate_days.{ext}"),
            render(format, &run.records, &run.records)?,
        );
        out.push_main(
            format!("simulate_summary.{ext}"),
            render(
                format,
                &[&summary],
                &json!({"seed": cfg.seed, "summary": summary, "ledger": run.ledger}),
            )?,
        );
        if event_log {
            let mut buf = Vec::new();
            for e in &run.events {
                serde_json::to_writer(&mut buf, e)?;
                buf.push(b'\n');
            }
            out.push("simulate_events.ndjson", buf);
        }
        return Ok(());
    }
    let runs = market_sim::run_seeds(exec, config, seeds)?;
    let mut days = Vec::new();
    let mut summaries = Vec::new();
    for (seed, recs) in seeds.iter().zip(&runs) {
        let s = [("seed", json!(seed))];
        for r in recs {
            days.push(with_columns(&s, r)?);
        }
        summaries.push(with_columns(&s, &summarize(recs, burn_in))?);
    }
    out.push(
        format!("simulate_days.{ext}"),
        render(format, &days, &days)?,
    );
    out.push_main(
        format!("simulate_summary.{ext}"),
        render(format, &summaries, &summaries)?,
    );
    Ok(())
}
