//! Overnight gap distributions.
//!
//! A gap is the gross return `G = S_o / S_c` between the official close and
//! the next official open. Both built-in families are (mixtures of)
//! lognormals, so every analytic quantity reduces to sums of normal CDFs in
//! log space.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::exec::{block_rng, fill_blocks, Exec};
use crate::normal;

/// How `mu_annual` of a lognormal gap maps to the mean of `ln G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftConvention {
    /// `E[ln G] = μτ − σ²τ/2`, so `E[G] = e^{μτ}`. With μ = 0 the open is an
    /// unbiased forecast of the close (risk-neutral, zero rates).
    #[default]
    Martingale,
    /// `E[ln G] = μτ`. With μ = 0 the median gap is exactly 1.
    LogDrift,
}

/// One lognormal component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    /// Mean of `ln G` in this component.
    pub mean_log: f64,
    /// Standard deviation of `ln G` in this component.
    pub sd_log: f64,
}

/// Probabilistic model of the overnight gross return `S_o / S_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapDistribution {
    Lognormal {
        mu_annual: f64,
        sigma_annual: f64,
        tau_years: f64,
        #[serde(default)]
        drift: DriftConvention,
    },
    LogMixture {
        components: Vec<MixtureComponent>,
    },
}

/// `ln G ~ N(mean, sd²)` with mixture weight `weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl LogComponent {
    fn prob_le(&self, ln_x: f64) -> f64 {
        if self.sd == 0.0 {
            if self.mean <= ln_x {
                1.0
            } else {
                0.0
            }
        } else {
            normal::cdf((ln_x - self.mean) / self.sd)
        }
    }

    fn prob_lt(&self, ln_x: f64) -> f64 {
        if self.sd == 0.0 {
            if self.mean < ln_x {
                1.0
            } else {
                0.0
            }
        } else {
            normal::cdf((ln_x - self.mean) / self.sd)
        }
    }

    /// `E[(t − G)·1{G < t}]`.
    fn shortfall_below(&self, t: f64) -> f64 {
        let ln_t = libm::log(t);
        if self.sd == 0.0 {
            return if self.mean < ln_t {
                t - libm::exp(self.mean)
            } else {
                0.0
            };
        }
        let d = (ln_t - self.mean) / self.sd;
        let v = t * normal::cdf(d)
            - libm::exp(self.mean + 0.5 * self.sd * self.sd) * normal::cdf(d - self.sd);
        v.max(0.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        libm::exp(self.mean + self.sd * z)
    }
}

impl GapDistribution {
    /// Martingale lognormal (`E[G] = e^{μτ}`), validated.
    pub fn lognormal(mu_annual: f64, sigma_annual: f64, tau_years: f64) -> Result<Self> {
        Self::lognormal_with(
            mu_annual,
            sigma_annual,
            tau_years,
            DriftConvention::Martingale,
        )
    }

    pub fn lognormal_with(
        mu_annual: f64,
        sigma_annual: f64,
        tau_years: f64,
        drift: DriftConvention,
    ) -> Result<Self> {
        let d = GapDistribution::Lognormal {
            mu_annual,
            sigma_annual,
            tau_years,
            drift,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let d = GapDistribution::LogMixture { components };
        d.validate()?;
        Ok(d)
    }

    /// Single lognormal component with the given log-space moments.
    pub fn log_normal_moments(mean_log: f64, sd_log: f64) -> Result<Self> {
        Self::mixture(vec![MixtureComponent {
            weight: 1.0,
            mean_log,
            sd_log,
        }])
    }

    /// Point mass at gross return `g`.
    pub fn point_mass(g: f64) -> Result<Self> {
        check("gross_return", g, g > 0.0, "> 0")?;
        Self::log_normal_moments(libm::log(g), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GapDistribution::Lognormal {
                mu_annual,
                sigma_annual,
                tau_years,
                ..
            } => {
                check("mu_annual", *mu_annual, true, "a finite number")?;
                check("sigma_annual", *sigma_annual, *sigma_annual >= 0.0, ">= 0")?;
                check("tau_years", *tau_years, *tau_years > 0.0, "> 0")?;
            }
            GapDistribution::LogMixture { components } => {
                if components.is_empty() {
                    return Err(Error::param(
                        "components",
                        "mixture needs at least one component",
                    ));
                }
                let mut total = 0.0;
                for c in components {
                    check("weight", c.weight, c.weight > 0.0, "> 0")?;
                    check("mean_log", c.mean_log, true, "a finite number")?;
                    check("sd_log", c.sd_log, c.sd_log >= 0.0, ">= 0")?;
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::param(
                        "weights",
                        format!("mixture weights must sum to 1, got {total}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn log_components(&self) -> Vec<LogComponent> {
        match *self {
            GapDistribution::Lognormal {
                mu_annual,
                sigma_annual,
                tau_years,
                drift,
            } => {
                let var = sigma_annual * sigma_annual * tau_years;
                let mean = match drift {
                    DriftConvention::Martingale => mu_annual * tau_years - 0.5 * var,
                    DriftConvention::LogDrift => mu_annual * tau_years,
                };
                vec![LogComponent {
                    weight: 1.0,
                    mean,
                    sd: var.sqrt(),
                }]
            }
            GapDistribution::LogMixture { ref components } => components
                .iter()
                .map(|c| LogComponent {
                    weight: c.weight,
                    mean: c.mean_log,
                    sd: c.sd_log,
                })
                .collect(),
        }
    }

    /// Draws one gap. Mixtures always consume one uniform then one normal so
    /// the stream layout does not depend on the component count.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            GapDistribution::Lognormal { .. } => self.log_components()[0].sample(rng),
            GapDistribution::LogMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (i, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let c = components[pick];
                LogComponent {
                    weight: c.weight,
                    mean: c.mean_log,
                    sd: c.sd_log,
                }
                .sample(rng)
            }
        }
    }

    /// Mean and standard deviation of `ln G` over the whole distribution.
    pub fn log_moments(&self) -> (f64, f64) {
        let comps = self.log_components();
        let mean: f64 = comps.iter().map(|c| c.weight * c.mean).sum();
        let second: f64 = comps
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean))
            .sum();
        (mean, (second - mean * mean).max(0.0).sqrt())
    }
}

/// Draws `n` gaps, identical for a given `(dist, seed, n)` regardless of
/// thread count.
pub fn sample_gaps(dist: &GapDistribution, seed: u64, n: usize) -> Result<Vec<f64>> {
    sample_gaps_with(Exec::default(), dist, seed, n)
}

pub fn sample_gaps_with(
    exec: Exec,
    dist: &GapDistribution,
    seed: u64,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("n", "sample count must be >= 1"));
    }
    dist.validate()?;
    let mut out = vec![0.0; n];
    fill_blocks(exec, &mut out, |b, chunk| {
        let mut rng = block_rng(seed, b);
        for x in chunk.iter_mut() {
            *x = dist.sample_one(&mut rng);
        }
    });
    Ok(out)
}

/// `Pr(G ≤ x)`.
pub fn gap_cdf(dist: &GapDistribution, x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("gap_cdf needs x > 0, got {x}")));
    }
    dist.validate()?;
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let ln_x = libm::log(x);
    let p: f64 = dist
        .log_components()
        .iter()
        .map(|c| c.weight * c.prob_le(ln_x))
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Default probability `π = Pr(G < ltv)`, i.e. `Pr(S_o < LTV·S_c)`.
pub fn default_prob(dist: &GapDistribution, ltv: f64) -> Result<f64> {
    if ltv.is_nan() || ltv <= 0.0 || ltv > 1.0 {
        return Err(Error::Domain(format!(
            "default_prob needs 0 < ltv <= 1, got {ltv}"
        )));
    }
    dist.validate()?;
    let ln_l = libm::log(ltv);
    let p: f64 = dist
        .log_components()
        .iter()
        .map(|c| c.weight * c.prob_lt(ln_l))
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// `E[(threshold − G)⁺]`: expected shortfall below the threshold, per unit of close.
pub fn expected_shortfall(dist: &GapDistribution, threshold: f64) -> Result<f64> {
    check("threshold", threshold, threshold > 0.0, "> 0")?;
    dist.validate()?;
    Ok(dist
        .log_components()
        .iter()
        .map(|c| c.weight * c.shortfall_below(threshold))
        .sum())
}

/// Conditional loss fraction
/// `ℓ = E[(threshold·S_c − S_o)/S_c | S_o < threshold·S_c]`.
///
/// With `threshold = 1` this is the loss given `S_o < S_c`.
pub fn expected_loss_frac(dist: &GapDistribution, threshold: f64) -> Result<f64> {
    if threshold.is_nan() || threshold <= 0.0 || threshold > 1.0 {
        return Err(Error::Domain(format!(
            "expected_loss_frac needs 0 < threshold <= 1, got {threshold}"
        )));
    }
    let pi = default_prob(dist, threshold)?;
    if pi <= 0.0 {
        return Err(Error::UndefinedConditional(format!(
            "Pr(G < {threshold}) = 0 under this distribution"
        )));
    }
    let ell = expected_shortfall(dist, threshold)? / pi;
    Ok(ell.clamp(0.0, threshold))
}
