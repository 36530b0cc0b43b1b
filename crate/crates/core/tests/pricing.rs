use proptest::prelude::*;

use timebound_core::gap_model::{
    default_prob, gap_cdf, DriftConvention, GapDistribution, MixtureComponent,
};
use timebound_core::pricing::{
    default_prob_closed_form, expected_redemption, fair_price, max_ltv, max_ltv_numeric,
    mc_put_value_with, no_arb_band, price, put_value_lognormal, tlp_approx, tlp_exact,
    PricingInputs, TRADING_DAYS_PER_YEAR,
};
use timebound_core::Exec;

const DAY: f64 = 1.0 / TRADING_DAYS_PER_YEAR;

fn mixture() -> GapDistribution {
    GapDistribution::mixture(vec![
        MixtureComponent {
            weight: 0.9,
            mean_log: 0.0,
            sd_log: 0.01,
        },
        MixtureComponent {
            weight: 0.1,
            mean_log: -0.03,
            sd_log: 0.04,
        },
    ])
    .unwrap()
}

proptest! {
    #[test]
    fn band_contains_fair_price(close in 0.01f64..1e4, pi in 0.0f64..=1.0, ell in 0.0f64..=1.0) {
        let (lo, hi) = no_arb_band(close, pi, ell).unwrap();
        let fair = fair_price(close, pi, ell).unwrap();
        prop_assert!(lo <= fair && fair <= hi);
        prop_assert_eq!(hi, close);
        prop_assert!(lo >= 0.0);
    }

    #[test]
    fn band_is_a_point_without_risk(close in 0.01f64..1e4, other in 0.0f64..=1.0) {
        for (pi, ell) in [(0.0, other), (other, 0.0)] {
            let (lo, hi) = no_arb_band(close, pi, ell).unwrap();
            prop_assert_eq!(lo, hi);
        }
    }

    #[test]
    fn default_prob_increases_with_ltv(
        sigma in 0.05f64..1.0,
        days in 1.0f64..5.0,
        a in 0.5f64..1.0,
        b in 0.5f64..1.0,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let dist = GapDistribution::lognormal(0.0, sigma, days * DAY).unwrap();
        prop_assert!(default_prob(&dist, lo).unwrap() <= default_prob(&dist, hi).unwrap());
        let m = mixture();
        prop_assert!(default_prob(&m, lo).unwrap() <= default_prob(&m, hi).unwrap());
    }

    #[test]
    fn max_ltv_inverts_default_prob(eps in 0.0005f64..0.9, sigma in 0.05f64..1.0, days in 1.0f64..5.0) {
        let tau = days * DAY;
        let ltv = max_ltv(eps, 0.0, sigma, tau).unwrap();
        let pi = default_prob_closed_form(ltv, 0.0, sigma, tau).unwrap();
        prop_assert!((pi - eps).abs() < 1e-9, "eps {eps} pi {pi}");
        if ltv <= 1.0 {
            let log_drift = GapDistribution::lognormal_with(0.0, sigma, tau, DriftConvention::LogDrift).unwrap();
            prop_assert!((default_prob(&log_drift, ltv).unwrap() - eps).abs() < 1e-9);
        }
    }

    #[test]
    fn numeric_max_ltv_respects_epsilon(eps in 0.001f64..0.5) {
        let m = mixture();
        let ltv = max_ltv_numeric(&m, eps).unwrap();
        prop_assert!(default_prob(&m, ltv).unwrap() <= eps + 1e-12);
        if ltv < 1.0 {
            prop_assert!(default_prob(&m, ltv + 1e-6).unwrap() > eps - 1e-6);
        }
    }

    #[test]
    fn redemption_bounded_and_falls_with_ltv(sigma in 0.01f64..1.0, a in 0.5f64..=1.0, b in 0.5f64..=1.0) {
        let dist = GapDistribution::lognormal(0.0, sigma, DAY).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let r_lo = expected_redemption(&dist, 100.0, lo).unwrap();
        let r_hi = expected_redemption(&dist, 100.0, hi).unwrap();
        prop_assert!(r_hi <= r_lo + 1e-12);
        prop_assert!(r_lo <= 100.0 && r_hi >= 0.0);
    }

    #[test]
    fn approximation_overstates_the_premium(s in 1e-6f64..=0.1) {
        let exact = tlp_exact(1.0, s, 1.0).unwrap();
        let ratio = tlp_approx(s, 1.0).unwrap() / exact;
        prop_assert!((1.0..=1.35).contains(&ratio), "s {s} ratio {ratio}");
    }
}

#[test]
fn median_gap_is_one_under_log_drift() {
    let d = GapDistribution::lognormal_with(0.0, 0.3, DAY, DriftConvention::LogDrift).unwrap();
    assert!((default_prob(&d, 1.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((gap_cdf(&d, 1.0).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn max_ltv_is_one_at_even_odds() {
    assert_eq!(max_ltv(0.5, 0.0, 0.3, DAY).unwrap(), 1.0);
}

#[test]
fn monte_carlo_is_identical_across_execution_modes() {
    let dist = GapDistribution::lognormal(0.0, 0.3, DAY).unwrap();
    let n = 100_003;
    let seq = mc_put_value_with(Exec::Sequential, &dist, 100.0, n, 9).unwrap();
    let par = mc_put_value_with(Exec::Parallel, &dist, 100.0, n, 9).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn monte_carlo_matches_lognormal_put() {
    let dist = GapDistribution::lognormal(0.0, 0.6, 3.0 * DAY).unwrap();
    let mc = mc_put_value_with(Exec::Parallel, &dist, 100.0, 200_000, 3).unwrap();
    let exact = put_value_lognormal(100.0, 0.6, 3.0 * DAY).unwrap();
    assert!((mc.estimate - exact).abs() < 4.0 * mc.std_error);
}

#[test]
fn pricing_result_is_consistent() {
    let r = price(&PricingInputs {
        close_price: 100.0,
        dist: GapDistribution::lognormal(0.0, 0.3, DAY).unwrap(),
        ltv: 0.95,
        epsilon: 0.01,
    })
    .unwrap();
    assert!(r.band_lower <= r.fair_price && r.fair_price <= r.band_upper);
    assert_eq!(r.band_upper, 100.0);
    assert!(r.pi > 0.0 && r.pi < 0.01);
    assert!(r.ell > 0.0 && r.ell < 1.0);
    assert!(r.tlp_model < r.tlp_exact);
    assert!(r.ltv_max < 1.0 && r.ltv_max > 0.9);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(fair_price(100.0, 1.5, 0.1).is_err());
    assert!(no_arb_band(-1.0, 0.1, 0.1).is_err());
    assert!(max_ltv(0.0, 0.0, 0.3, DAY).is_err());
    assert!(max_ltv(0.01, 0.0, 0.0, DAY).is_err());
    assert!(GapDistribution::lognormal(0.0, -0.1, DAY).is_err());
}
