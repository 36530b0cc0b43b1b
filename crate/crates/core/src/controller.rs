//! Proportional LTV controller.
//!
//! Each update smooths the observed premium with an EMA and moves the LTV by
//! `−k·(smoothed − target)`, limited per step and clamped to the LTV bounds.
//! A premium above target tightens LTV (less supply), one below target (or
//! negative, i.e. the coin trades above par) loosens it.

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gain_k: f64,
    pub tlp_target: f64,
    /// Acceptable premium range, inclusive.
    pub tlp_band: (f64, f64),
    pub ltv_floor: f64,
    pub ltv_ceiling: f64,
    /// Largest LTV decrease per update (and increase, unless
    /// `max_step_up` is set).
    pub max_step_per_update: f64,
    /// Optional separate limit for LTV increases.
    #[serde(default)]
    pub max_step_up: Option<f64>,
    /// EMA weight on the newest observation.
    pub smoothing_alpha: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gain_k: 2.0,
            tlp_target: 0.005,
            tlp_band: (0.0, 0.01),
            ltv_floor: 0.80,
            ltv_ceiling: 0.95,
            max_step_per_update: 0.02,
            max_step_up: None,
            smoothing_alpha: 0.5,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        check("gain_k", self.gain_k, self.gain_k > 0.0, "> 0")?;
        let (lo, hi) = self.tlp_band;
        check("tlp_band.0", lo, true, "a finite number")?;
        check("tlp_band.1", hi, true, "a finite number")?;
        check(
            "tlp_target",
            self.tlp_target,
            lo <= self.tlp_target && self.tlp_target <= hi,
            "tlp_min <= tlp_target <= tlp_max",
        )?;
        check(
            "ltv_floor",
            self.ltv_floor,
            self.ltv_floor > 0.0 && self.ltv_floor <= self.ltv_ceiling,
            "0 < floor <= ceiling",
        )?;
        check(
            "ltv_ceiling",
            self.ltv_ceiling,
            self.ltv_ceiling <= 1.0,
            "<= 1",
        )?;
        check(
            "max_step_per_update",
            self.max_step_per_update,
            self.max_step_per_update > 0.0,
            "> 0",
        )?;
        if let Some(up) = self.max_step_up {
            check("max_step_up", up, up > 0.0, "> 0")?;
        }
        check(
            "smoothing_alpha",
            self.smoothing_alpha,
            self.smoothing_alpha > 0.0 && self.smoothing_alpha <= 1.0,
            "a value in (0, 1]",
        )
    }

    fn step_up_limit(&self) -> f64 {
        self.max_step_up.unwrap_or(self.max_step_per_update)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub current_ltv: f64,
    pub smoothed_tlp: f64,
    pub update_count: u64,
}

impl ControllerState {
    /// Fresh state at `initial_ltv`, which must lie within the config bounds.
    pub fn new(config: &ControllerConfig, initial_ltv: f64) -> Result<Self> {
        config.validate()?;
        check(
            "initial_ltv",
            initial_ltv,
            config.ltv_floor <= initial_ltv && initial_ltv <= config.ltv_ceiling,
            "a value within [ltv_floor, ltv_ceiling]",
        )?;
        Ok(ControllerState {
            current_ltv: initial_ltv,
            smoothed_tlp: 0.0,
            update_count: 0,
        })
    }
}

/// `(S_c − P_obs)/S_c`; negative when the coin trades above par.
pub fn observe_tlp(close: f64, observed_price: f64) -> Result<f64> {
    check("close", close, close > 0.0, "> 0")?;
    check(
        "observed_price",
        observed_price,
        observed_price >= 0.0,
        ">= 0",
    )?;
    Ok((close - observed_price) / close)
}

/// One controller update. Extreme inputs are absorbed by the clamps.
pub fn step(state: &ControllerState, config: &ControllerConfig, tlp_obs: f64) -> ControllerState {
    let smoothed = if state.update_count == 0 {
        tlp_obs
    } else {
        config.smoothing_alpha * tlp_obs + (1.0 - config.smoothing_alpha) * state.smoothed_tlp
    };
    let raw = -config.gain_k * (smoothed - config.tlp_target);
    let delta = raw.clamp(-config.max_step_per_update, config.step_up_limit());
    let ltv = (state.current_ltv + delta).clamp(config.ltv_floor, config.ltv_ceiling);
    ControllerState {
        current_ltv: ltv,
        smoothed_tlp: smoothed,
        update_count: state.update_count + 1,
    }
}

/// Whether `tlp_obs` lies within the configured band (boundaries included).
pub fn in_band(config: &ControllerConfig, tlp_obs: f64) -> bool {
    config.tlp_band.0 <= tlp_obs && tlp_obs <= config.tlp_band.1
}

/// Convenience wrapper owning config and state.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvController {
    config: ControllerConfig,
    state: ControllerState,
}

impl LtvController {
    pub fn new(config: ControllerConfig, initial_ltv: f64) -> Result<Self> {
        let state = ControllerState::new(&config, initial_ltv)?;
        Ok(LtvController { config, state })
    }

    pub fn ltv(&self) -> f64 {
        self.state.current_ltv
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn update(&mut self, tlp_obs: f64) -> Result<f64> {
        if !tlp_obs.is_finite() {
            return Err(Error::param("tlp_obs", "observed premium must be finite"));
        }
        self.state = step(&self.state, &self.config, tlp_obs);
        Ok(self.state.current_ltv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: f64, max_step: f64) -> ControllerConfig {
        ControllerConfig {
            gain_k: k,
            tlp_target: 0.005,
            tlp_band: (0.0, 0.01),
            ltv_floor: 0.80,
            ltv_ceiling: 1.0,
            max_step_per_update: max_step,
            max_step_up: None,
            smoothing_alpha: 1.0,
        }
    }

    fn at(ltv: f64) -> ControllerState {
        ControllerState {
            current_ltv: ltv,
            smoothed_tlp: 0.0,
            update_count: 0,
        }
    }

    #[test]
    fn observe_examples() {
        assert_eq!(observe_tlp(100.0, 100.0).unwrap(), 0.0);
        assert!((observe_tlp(100.0, 99.5).unwrap() - 0.005).abs() < 1e-15);
        assert!((observe_tlp(100.0, 100.2).unwrap() + 0.002).abs() < 1e-15);
        assert!(observe_tlp(0.0, 1.0).is_err());
        assert!(observe_tlp(-5.0, 1.0).is_err());
    }

    #[test]
    fn on_target_leaves_ltv_unchanged() {
        let c = cfg(0.5, 0.05);
        let s = step(&at(0.95), &c, 0.005);
        assert_eq!(s.current_ltv, 0.95);
        assert_eq!(s.update_count, 1);
    }

    #[test]
    fn proportional_step() {
        let s = step(&at(0.95), &cfg(0.5, 0.05), 0.01);
        assert!((s.current_ltv - 0.9475).abs() < 1e-15);
    }

    #[test]
    fn step_is_rate_limited() {
        let s = step(&at(0.95), &cfg(10.0, 0.02), 0.05);
        assert!((s.current_ltv - 0.93).abs() < 1e-15);
    }

    #[test]
    fn floor_and_ceiling_hold() {
        let c = cfg(10.0, 0.5);
        assert_eq!(step(&at(0.85), &c, 0.5).current_ltv, 0.80);
        assert_eq!(step(&at(0.99), &c, -0.5).current_ltv, 1.0);
    }

    #[test]
    fn asymmetric_up_limit() {
        let mut c = cfg(10.0, 0.05);
        c.max_step_up = Some(0.01);
        let up = step(&at(0.90), &c, -0.1);
        assert!((up.current_ltv - 0.91).abs() < 1e-15);
        let down = step(&at(0.90), &c, 0.1);
        assert!((down.current_ltv - 0.85).abs() < 1e-15);
    }

    #[test]
    fn ema_smoothing() {
        let mut c = cfg(1.0, 1.0);
        c.smoothing_alpha = 0.25;
        let s1 = step(&at(0.9), &c, 0.02);
        assert_eq!(s1.smoothed_tlp, 0.02);
        let s2 = step(&s1, &c, 0.0);
        assert!((s2.smoothed_tlp - 0.015).abs() < 1e-15);
    }

    #[test]
    fn band_membership() {
        let c = cfg(1.0, 0.1);
        assert!(in_band(&c, 0.005));
        assert!(!in_band(&c, 0.02));
        assert!(in_band(&c, 0.0));
        assert!(in_band(&c, 0.01));
        assert!(!in_band(&c, -0.0001));
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(1.0, 0.1);
        c.tlp_target = 0.02;
        assert!(c.validate().is_err());
        let mut c = cfg(0.0, 0.1);
        assert!(c.validate().is_err());
        c = cfg(1.0, 0.1);
        c.ltv_floor = 0.99;
        c.ltv_ceiling = 0.9;
        assert!(c.validate().is_err());
        c = cfg(1.0, 0.1);
        c.smoothing_alpha = 0.0;
        assert!(c.validate().is_err());
        assert!(ControllerState::new(&cfg(1.0, 0.1), 0.5).is_err());
    }
}
