//! Pricing of the time-bound stablecoin.
//!
//! At the next open a stablecoin minted against one share with face `S_c`
//! pays `min(S_c, S_o) = S_c − max(0, S_c − S_o)`: the face value minus a put
//! struck at the close. Its fair price is therefore `S_c` minus the value of
//! that put, and the liquidity-of-time premium (TLP) is the put value as a
//! fraction of `S_c`.
//!
//! Two closed forms for the put are exposed:
//!
//! * [`put_value_paper`] evaluates
//!   `S_c·Φ(σ√τ/2) − S_c·e^{−σ²τ/2}·Φ(−σ√τ/2)` literally. It is kept because
//!   it defines the published TLP term structure, but it is *not* the
//!   expectation of `max(0, S_c − S_o)` under any lognormal law: it exceeds
//!   the textbook at-the-money put by `S_c·Φ(−σ√τ/2)·(1 − e^{−σ²τ/2})`.
//! * [`put_value_lognormal`] is the truncated-lognormal expectation under the
//!   martingale convention (`E[S_o] = S_c`). Monte Carlo agrees with it, so it
//!   is the one used for fair prices, the no-arbitrage band and the
//!   simulation.
//!
//! See [`discrepancy_report`] for the numerical comparison of the two.

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::exec::{block_rng, map_blocks, Exec};
use crate::gap_model::{self, GapDistribution};
use crate::normal;

/// Trading days per year used to convert day counts to year fractions.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Payoff of one stablecoin at the open: `min(S_c, S_o)`.
pub fn stablecoin_payoff(close: f64, open: f64) -> f64 {
    debug_assert!(close > 0.0 && open >= 0.0);
    close - (close - open).max(0.0)
}

fn check_vol(sigma_annual: f64, tau_years: f64) -> Result<()> {
    check("sigma_annual", sigma_annual, sigma_annual >= 0.0, ">= 0")?;
    check("tau_years", tau_years, tau_years > 0.0, "> 0")
}

/// Put value from the published closed form, evaluated verbatim.
pub fn put_value_paper(close: f64, sigma_annual: f64, tau_years: f64) -> Result<f64> {
    check("close", close, close > 0.0, "> 0")?;
    check_vol(sigma_annual, tau_years)?;
    let s = sigma_annual * tau_years.sqrt();
    if s == 0.0 {
        return Ok(0.0);
    }
    let d = 0.5 * s;
    Ok(close * normal::cdf(d) - close * libm::exp(-0.5 * s * s) * normal::cdf(-d))
}

/// `E[max(0, S_c − S_o)]` for a martingale lognormal gap with volatility
/// `sigma_annual` over `tau_years`: `S_c·(Φ(σ√τ/2) − Φ(−σ√τ/2))`.
pub fn put_value_lognormal(close: f64, sigma_annual: f64, tau_years: f64) -> Result<f64> {
    check("close", close, close > 0.0, "> 0")?;
    check_vol(sigma_annual, tau_years)?;
    let dist = GapDistribution::lognormal(0.0, sigma_annual, tau_years)?;
    put_value_under(&dist, close)
}

/// `E[max(0, S_c − S_o)]` under an arbitrary gap distribution.
pub fn put_value_under(dist: &GapDistribution, close: f64) -> Result<f64> {
    check("close", close, close > 0.0, "> 0")?;
    Ok(close * gap_model::expected_shortfall(dist, 1.0)?)
}

/// TLP implied by [`put_value_paper`], floored at zero.
pub fn tlp_exact(close: f64, sigma_annual: f64, tau_years: f64) -> Result<f64> {
    Ok((put_value_paper(close, sigma_annual, tau_years)? / close).max(0.0))
}

/// First-order rule of thumb `½·σ·√τ`.
///
/// The exact small-`τ` slope of both closed forms is `Φ'(0) ≈ 0.3989`, so
/// this overstates the premium by roughly 25% for short closures.
pub fn tlp_approx(sigma_annual: f64, tau_years: f64) -> Result<f64> {
    check_vol(sigma_annual, tau_years)?;
    Ok(0.5 * sigma_annual * tau_years.sqrt())
}

fn check_prob(name: &'static str, v: f64) -> Result<()> {
    check(name, v, (0.0..=1.0).contains(&v), "a value in [0, 1]")
}

/// Fair price `S_c·(1 − π·ℓ)`.
pub fn fair_price(close: f64, pi: f64, ell: f64) -> Result<f64> {
    check("close", close, close > 0.0, "> 0")?;
    check_prob("pi", pi)?;
    check_prob("ell", ell)?;
    Ok(close * (1.0 - pi * ell))
}

/// No-arbitrage band `[S_c·(1 − π·ℓ), S_c]`.
pub fn no_arb_band(close: f64, pi: f64, ell: f64) -> Result<(f64, f64)> {
    Ok((fair_price(close, pi, ell)?, close))
}

/// `π = Φ((ln LTV + μτ)/(σ√τ))`, the closed-form default probability the
/// max-LTV rule inverts.
pub fn default_prob_closed_form(
    ltv: f64,
    mu_annual: f64,
    sigma_annual: f64,
    tau_years: f64,
) -> Result<f64> {
    check("ltv", ltv, ltv > 0.0, "> 0")?;
    check("sigma_annual", sigma_annual, sigma_annual > 0.0, "> 0")?;
    check("tau_years", tau_years, tau_years > 0.0, "> 0")?;
    let s = sigma_annual * tau_years.sqrt();
    Ok(normal::cdf((libm::log(ltv) + mu_annual * tau_years) / s))
}

/// Largest LTV whose default probability does not exceed `epsilon`:
/// `LTV* = exp(−μτ + σ√τ·Φ⁻¹(ε))`.
pub fn max_ltv(epsilon: f64, mu_annual: f64, sigma_annual: f64, tau_years: f64) -> Result<f64> {
    check(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon < 1.0,
        "a value in (0, 1)",
    )?;
    check("mu_annual", mu_annual, true, "a finite number")?;
    check("sigma_annual", sigma_annual, sigma_annual > 0.0, "> 0")?;
    check("tau_years", tau_years, tau_years > 0.0, "> 0")?;
    let s = sigma_annual * tau_years.sqrt();
    Ok(libm::exp(
        -mu_annual * tau_years + s * normal::quantile(epsilon),
    ))
}

/// Largest LTV in (0, 1] with `default_prob(dist, LTV) ≤ epsilon`, found by
/// bisection. Works for any gap distribution.
pub fn max_ltv_numeric(dist: &GapDistribution, epsilon: f64) -> Result<f64> {
    check(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon < 1.0,
        "a value in (0, 1)",
    )?;
    if gap_model::default_prob(dist, 1.0)? <= epsilon {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap_model::default_prob(dist, mid)? <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// Sample mean and standard error of `max(0, S_c − S_o)` over `n` sampled
/// gaps. Deterministic per seed and independent of thread count.
pub fn mc_put_value(dist: &GapDistribution, close: f64, n: usize, seed: u64) -> Result<McEstimate> {
    mc_put_value_with(Exec::default(), dist, close, n, seed)
}

pub fn mc_put_value_with(
    exec: Exec,
    dist: &GapDistribution,
    close: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 1000 {
        return Err(Error::param(
            "n",
            format!("need at least 1000 paths, got {n}"),
        ));
    }
    check("close", close, close > 0.0, "> 0")?;
    dist.validate()?;
    let partials = map_blocks(exec, n, |b, len| {
        let mut rng = block_rng(seed, b);
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for _ in 0..len {
            let g = dist.sample_one(&mut rng);
            let payoff = (close - close * g).max(0.0);
            sum += payoff;
            sum_sq += payoff * payoff;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
        paths: n,
    })
}

/// TLP term structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStructure {
    pub sigma_daily: Vec<f64>,
    pub days: Vec<f64>,
    /// `tlp[i][j]` for `sigma_daily[i]` and `days[j]`.
    pub tlp: Vec<Vec<f64>>,
}

/// [`tlp_exact`] on a grid of daily vols × closure lengths in trading days.
pub fn term_structure(sigma_daily: &[f64], days: &[f64]) -> Result<TermStructure> {
    term_structure_with(sigma_daily, days, TRADING_DAYS_PER_YEAR)
}

pub fn term_structure_with(
    sigma_daily: &[f64],
    days: &[f64],
    trading_days_per_year: f64,
) -> Result<TermStructure> {
    if sigma_daily.is_empty() || days.is_empty() {
        return Err(Error::param(
            "grid",
            "term structure needs non-empty vol and day lists",
        ));
    }
    check(
        "trading_days_per_year",
        trading_days_per_year,
        trading_days_per_year > 0.0,
        "> 0",
    )?;
    for &d in days {
        check("days", d, d > 0.0, "> 0")?;
    }
    let mut tlp = Vec::with_capacity(sigma_daily.len());
    for &sd in sigma_daily {
        check("sigma_daily", sd, sd >= 0.0, ">= 0")?;
        let sigma_annual = sd * trading_days_per_year.sqrt();
        let row = days
            .iter()
            .map(|&d| tlp_exact(1.0, sigma_annual, d / trading_days_per_year))
            .collect::<Result<Vec<_>>>()?;
        tlp.push(row);
    }
    Ok(TermStructure {
        sigma_daily: sigma_daily.to_vec(),
        days: days.to_vec(),
        tlp,
    })
}

/// Inputs for a full pricing run over one closure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingInputs {
    pub close_price: f64,
    pub dist: GapDistribution,
    pub ltv: f64,
    /// Target maximum default probability for the max-LTV rule.
    pub epsilon: f64,
}

/// Everything the pricing layer says about one closure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    /// Put value from the published closed form; for mixtures (which have no
    /// such closed form) the model value below.
    pub put_value: f64,
    /// `E[max(0, S_c − S_o)]` under the gap distribution.
    pub put_value_model: f64,
    /// `put_value / S_c`.
    pub tlp_exact: f64,
    /// `put_value_model / S_c`.
    pub tlp_model: f64,
    /// `½σ√τ`; only defined for the lognormal family.
    pub tlp_approx: Option<f64>,
    /// `Pr(S_o < LTV·S_c)`.
    pub pi: f64,
    /// Conditional loss fraction at threshold LTV (0 when `pi` is 0).
    pub ell: f64,
    pub fair_price: f64,
    pub band_lower: f64,
    pub band_upper: f64,
    pub ltv: f64,
    /// Largest LTV with default probability at most `epsilon`.
    pub ltv_max: f64,
}

pub fn price(inputs: &PricingInputs) -> Result<PricingResult> {
    let PricingInputs {
        close_price: close,
        ref dist,
        ltv,
        epsilon,
    } = *inputs;
    check("close_price", close, close > 0.0, "> 0")?;
    check("ltv", ltv, ltv > 0.0 && ltv <= 1.0, "a value in (0, 1]")?;
    check(
        "epsilon",
        epsilon,
        epsilon > 0.0 && epsilon < 1.0,
        "a value in (0, 1)",
    )?;
    dist.validate()?;

    let put_value_model = put_value_under(dist, close)?;
    let (put_value, tlp_approx) = match *dist {
        GapDistribution::Lognormal {
            sigma_annual,
            tau_years,
            ..
        } => (
            put_value_paper(close, sigma_annual, tau_years)?,
            Some(tlp_approx(sigma_annual, tau_years)?),
        ),
        GapDistribution::LogMixture { .. } => (put_value_model, None),
    };
    let pi = gap_model::default_prob(dist, ltv)?;
    let ell = if pi > 0.0 {
        gap_model::expected_loss_frac(dist, ltv)?
    } else {
        0.0
    };
    let (band_lower, band_upper) = no_arb_band(close, pi, ell)?;
    Ok(PricingResult {
        put_value,
        put_value_model,
        tlp_exact: (put_value / close).max(0.0),
        tlp_model: put_value_model / close,
        tlp_approx,
        pi,
        ell,
        fair_price: fair_price(close, pi, ell)?,
        band_lower,
        band_upper,
        ltv,
        ltv_max: max_ltv_numeric(dist, epsilon)?,
    })
}

/// Expected redemption value of one stablecoin unit (face `S_c`) minted at
/// `ltv`: the unit is backed by `1/ltv` of a share, so it pays
/// `S_c·min(1, G/ltv)` and
/// `E = S_c·(1 − E[(ltv − G)⁺]/ltv)`.
///
/// At `ltv = 1` this is `E[min(S_c, S_o)]`.
pub fn expected_redemption(dist: &GapDistribution, close: f64, ltv: f64) -> Result<f64> {
    check("close", close, close > 0.0, "> 0")?;
    check("ltv", ltv, ltv > 0.0 && ltv <= 1.0, "a value in (0, 1]")?;
    let shortfall = gap_model::expected_shortfall(dist, ltv)?;
    Ok(close * (1.0 - shortfall / ltv).clamp(0.0, 1.0))
}

/// One row of the closed-form vs Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub sigma_annual: f64,
    pub tau_years: f64,
    pub put_paper: f64,
    pub put_lognormal: f64,
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    /// `(put_paper − mc) / se`.
    pub z_paper: f64,
    /// `(put_lognormal − mc) / se`.
    pub z_lognormal: f64,
    /// Closed-form gap `put_paper − put_lognormal`; equals
    /// `S_c·Φ(−σ√τ/2)·(1 − e^{−σ²τ/2})`.
    pub excess_paper: f64,
}

/// Compares both closed forms with Monte Carlo (martingale lognormal gap) on
/// a σ × τ grid. Each cell uses its own seed derived from `seed`.
pub fn discrepancy_report(
    exec: Exec,
    close: f64,
    sigmas: &[f64],
    taus: &[f64],
    paths: usize,
    seed: u64,
) -> Result<Vec<DiscrepancyRow>> {
    let mut rows = Vec::new();
    for (i, &sigma) in sigmas.iter().enumerate() {
        for (j, &tau) in taus.iter().enumerate() {
            let dist = GapDistribution::lognormal(0.0, sigma, tau)?;
            let cell_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((i * taus.len() + j) as u64);
            let mc = mc_put_value_with(exec, &dist, close, paths, cell_seed)?;
            let put_paper = put_value_paper(close, sigma, tau)?;
            let put_lognormal = put_value_lognormal(close, sigma, tau)?;
            let z = |v: f64| {
                if mc.std_error > 0.0 {
                    (v - mc.estimate) / mc.std_error
                } else {
                    0.0
                }
            };
            rows.push(DiscrepancyRow {
                sigma_annual: sigma,
                tau_years: tau,
                put_paper,
                put_lognormal,
                mc_estimate: mc.estimate,
                mc_std_error: mc.std_error,
                z_paper: z(put_paper),
                z_lognormal: z(put_lognormal),
                excess_paper: put_paper - put_lognormal,
            });
        }
    }
    Ok(rows)
}
