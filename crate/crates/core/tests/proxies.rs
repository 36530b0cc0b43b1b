use std::collections::BTreeSet;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use timebound_core::proxies::{
    adr_premium, aggregate_proxies, carry_factor, futures_basis, overnight_reversal, parse_adr_csv,
    parse_event_dates, parse_futures_csv, parse_opens_csv, premarket_gap, BucketBy, ProxyKind,
    ProxyObservation, DEFAULT_REVERSAL_THRESHOLD,
};
use timebound_core::Error;

fn obs(day: u32, value: f64, hours: f64, bucket: &str) -> ProxyObservation {
    ProxyObservation {
        instrument: "x".into(),
        date: NaiveDate::from_ymd_opt(2024, 1, day).unwrap(),
        kind: ProxyKind::PremarketGap,
        value,
        closure_hours: hours,
        vol_bucket: bucket.into(),
    }
}

#[test]
fn adr_premium_exact() {
    assert_eq!(adr_premium(10.5, 1.0, 10.0).unwrap(), 0.05);
    assert_eq!(adr_premium(10.0, 1.0, 10.0).unwrap(), 0.0);
}

#[test]
fn weekend_reversal_is_flagged() {
    let r = overnight_reversal(100.0, 105.0, 103.95, DEFAULT_REVERSAL_THRESHOLD).unwrap();
    assert!((r.overnight_ret - 0.05).abs() < 1e-12);
    assert!((r.intraday_ret + 0.01).abs() < 1e-12);
    assert!(r.reversal);
    let same_sign = overnight_reversal(100.0, 105.0, 106.0, DEFAULT_REVERSAL_THRESHOLD).unwrap();
    assert!(!same_sign.reversal);
    let small = overnight_reversal(100.0, 101.0, 100.0, DEFAULT_REVERSAL_THRESHOLD).unwrap();
    assert!(!small.reversal);
}

#[test]
fn carry_adjusted_basis_is_zero_at_fair_value() {
    let cash = 4000.0;
    let growth = carry_factor(0.05, 0.02, 0.25).unwrap();
    let fair_futures = cash * growth;
    assert!(
        futures_basis(fair_futures, 1.0 / growth, cash)
            .unwrap()
            .abs()
            < 1e-12
    );
}

#[test]
fn csv_inputs_parse() {
    let adr = parse_adr_csv(
        "date,instrument,closure_hours,adr_usd,fx,local_close\n2024-01-02,ADR1,15,10.5,1.0,10.0\n"
            .as_bytes(),
    )
    .unwrap();
    assert_eq!(adr[0].value, 0.05);
    assert_eq!(adr[0].closure_hours, 15.0);
    assert_eq!(adr[0].vol_bucket, "all");

    let fut = parse_futures_csv("date,futures,carry,cash_close\n2024-01-02,101,1,100\n".as_bytes())
        .unwrap();
    assert!((fut[0].value - 0.01).abs() < 1e-12);

    let opens = parse_opens_csv(
        "date,prev_close,open,close\n2024-01-02,100,105,103.95\n".as_bytes(),
        DEFAULT_REVERSAL_THRESHOLD,
    )
    .unwrap();
    assert_eq!(opens.len(), 2);
    assert_eq!(opens[0].kind, ProxyKind::PremarketGap);
    assert_eq!(opens[1].kind, ProxyKind::OvernightReversal);
    assert!(opens[1].value > 0.0);

    let dates = parse_event_dates("date\n2024-01-02\n2024-01-05\n".as_bytes()).unwrap();
    assert_eq!(dates.len(), 2);
}

#[test]
fn bad_rows_report_line() {
    let err = parse_adr_csv(
        "date,adr_usd,fx,local_close\n2024-01-02,10,1,10\n2024-01-03,10,0,10\n".as_bytes(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Data { line: 3, .. }), "{err:?}");
}

#[test]
fn aggregation_by_hours_and_events() {
    let data = vec![
        obs(2, 0.01, 15.5, "low"),
        obs(3, 0.03, 15.5, "low"),
        obs(4, -0.02, 63.5, "high"),
        obs(5, 0.04, 63.5, "high"),
        obs(8, 0.00, 63.5, "high"),
    ];
    let by_hours = aggregate_proxies(&data, &BucketBy::ClosureHours).unwrap();
    assert_eq!(by_hours.len(), 2);
    assert_eq!(by_hours[0].bucket, "15.5");
    assert!((by_hours[0].median - 0.02).abs() < 1e-15);
    assert_eq!(by_hours[1].median, 0.0);
    assert_eq!(by_hours[1].count, 3);

    let dates: BTreeSet<NaiveDate> = [NaiveDate::from_ymd_opt(2024, 1, 4).unwrap()].into();
    let by_event = aggregate_proxies(&data, &BucketBy::Event { dates }).unwrap();
    assert_eq!(by_event[0].bucket, "event");
    assert_eq!(by_event[0].count, 1);
    assert_eq!(by_event[1].count, 4);
    assert!(aggregate_proxies(&[], &BucketBy::VolBucket).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn overnight_and_intraday_compose(prev in 1.0f64..1000.0, g in 0.5f64..1.5, h in 0.5f64..1.5) {
        let open = prev * g;
        let close = open * h;
        let r = overnight_reversal(prev, open, close, 0.0).unwrap();
        let total = close / prev - 1.0;
        prop_assert!(((1.0 + r.overnight_ret) * (1.0 + r.intraday_ret) - 1.0 - total).abs() < 1e-12);
        prop_assert!((premarket_gap(prev, open).unwrap() - r.overnight_ret).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn returns_are_scale_free(prev in 1.0f64..1000.0, g in 0.5f64..1.5, h in 0.5f64..1.5, c in 0.01f64..100.0) {
        let (open, close) = (prev * g, prev * g * h);
        let a = overnight_reversal(prev, open, close, 0.02).unwrap();
        let b = overnight_reversal(prev * c, open * c, close * c, 0.02).unwrap();
        prop_assert!((a.overnight_ret - b.overnight_ret).abs() < 1e-12);
        prop_assert!((a.intraday_ret - b.intraday_ret).abs() < 1e-12);
        let p1 = adr_premium(open, 1.0, prev).unwrap();
        let p2 = adr_premium(open * c, 1.0, prev * c).unwrap();
        prop_assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn aggregation_ignores_input_order(
        values in prop::collection::vec((-0.1f64..0.1, 0usize..3), 1..40),
        seed in any::<u64>(),
    ) {
        let hours = [15.5, 39.5, 63.5];
        let data: Vec<ProxyObservation> = values
            .iter()
            .enumerate()
            .map(|(i, &(v, b))| obs(1 + (i % 28) as u32, v, hours[b], "all"))
            .collect();
        let mut shuffled = data.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate_proxies(&data, &BucketBy::ClosureHours).unwrap();
        let b = aggregate_proxies(&shuffled, &BucketBy::ClosureHours).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.bucket, &y.bucket);
            prop_assert_eq!(x.count, y.count);
            prop_assert_eq!(x.median, y.median);
            prop_assert!((x.mean - y.mean).abs() < 1e-15);
        }
    }
}
