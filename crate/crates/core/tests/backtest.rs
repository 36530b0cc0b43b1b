use proptest::prelude::*;

use timebound_core::backtest::{
    bundled_series, compare_policies, histogram, nearest_rank, parse_series, percentile_sorted,
    replay, synthetic_series, trailing_vol, write_series_csv, BacktestPolicy, DEFAULT_VOL_WINDOW,
    HISTOGRAM_BINS, STATIC_LTV_GRID,
};
use timebound_core::controller::ControllerConfig;
use timebound_core::{Error, Exec};

fn static_replay(ltv: f64) -> timebound_core::backtest::BacktestReport {
    replay(
        &bundled_series(),
        &BacktestPolicy::Static { ltv },
        DEFAULT_VOL_WINDOW,
        0.001,
    )
    .unwrap()
}

#[test]
fn nightly_defaults_are_monotone_in_ltv() {
    let reports: Vec<_> = STATIC_LTV_GRID.iter().map(|&l| static_replay(l)).collect();
    for pair in reports.windows(2) {
        for (lo, hi) in pair[0].nights.iter().zip(&pair[1].nights) {
            assert!(
                !lo.defaulted || hi.defaulted,
                "{}: default at lower LTV only",
                lo.date
            );
        }
        assert!(pair[0].default_count <= pair[1].default_count);
    }
    for r in &reports {
        let key = format!("{:.4}", r.nights[0].ltv);
        assert_eq!(r.default_count_static[&key], r.default_count);
    }
}

#[test]
fn report_statistics_match_full_sort() {
    let r = static_replay(1.0);
    assert_eq!(r.n_nights, 1250);
    let mut sorted: Vec<f64> = r.nights.iter().map(|n| n.tlp).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |p: f64| sorted[((p / 100.0 * 1250.0).ceil() as usize) - 1];
    assert_eq!(r.median_tlp, pick(50.0));
    assert_eq!(r.p95_tlp, pick(95.0));
    assert_eq!(r.p99_tlp, pick(99.0));
    assert_eq!(r.histogram_bins.len(), HISTOGRAM_BINS);
    assert_eq!(
        r.histogram_bins.iter().map(|b| b.count).sum::<usize>(),
        1250
    );
    assert_eq!(r.histogram_bins[0].bin_low, sorted[0]);
    assert_eq!(r.histogram_bins[HISTOGRAM_BINS - 1].bin_high, sorted[1249]);
}

#[test]
fn replay_is_byte_identical() {
    let a = serde_json::to_string(&static_replay(0.95)).unwrap();
    let b = serde_json::to_string(&static_replay(0.95)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn comparison_is_independent_of_execution_mode() {
    let records = bundled_series();
    let controller = ControllerConfig::default();
    let run = |exec| {
        compare_policies(
            exec,
            &records,
            &STATIC_LTV_GRID,
            Some((&controller, 0.9)),
            DEFAULT_VOL_WINDOW,
            0.001,
        )
        .unwrap()
    };
    let (seq, par) = (run(Exec::Sequential), run(Exec::Parallel));
    assert_eq!(seq, par);
    assert_eq!(seq.rows.last().unwrap().policy, "dynamic");
}

#[test]
fn holder_payout_stays_in_unit_interval() {
    for &ltv in &STATIC_LTV_GRID {
        let r = static_replay(ltv);
        assert!(r
            .nights
            .iter()
            .all(|n| (0.0..=1.0).contains(&n.holder_payout)));
        assert!(r
            .nights
            .iter()
            .all(|n| n.defaulted == (n.next_open < ltv * n.close)));
    }
}

#[test]
fn bundled_csv_round_trips() {
    let records = bundled_series();
    let text = write_series_csv(&records);
    let parsed = parse_series(text.as_bytes()).unwrap();
    assert_eq!(parsed.records, records);
    assert_eq!(synthetic_series(7, 300), synthetic_series(7, 300));
}

#[test]
fn short_history_is_rejected() {
    let records = synthetic_series(1, 30);
    let err = replay(
        &records,
        &BacktestPolicy::Static { ltv: 0.9 },
        DEFAULT_VOL_WINDOW,
        0.0,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        Error::InsufficientHistory {
            required: 61,
            actual: 30
        }
    ));
}

#[test]
fn malformed_rows_name_their_line() {
    let text = "date,close,next_open\n2020-01-02,100,101\n2020-01-03,abc,99\n";
    let err = parse_series(text.as_bytes()).unwrap_err();
    assert!(matches!(err, Error::Data { line: 3, .. }), "{err:?}");
}

#[test]
fn volatility_estimate_is_positive_after_warm_up() {
    let records = bundled_series();
    let vols = trailing_vol(&records, DEFAULT_VOL_WINDOW);
    assert_eq!(vols.len(), records.len());
    assert!(vols.iter().all(|v| v.is_finite() && *v > 0.0));
}

proptest! {
    #[test]
    fn percentile_matches_sorting(values in prop::collection::vec(-1.0f64..1.0, 1..300), p in 0.0f64..=100.0) {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = nearest_rank(sorted.len(), p);
        prop_assert!(rank >= 1 && rank <= sorted.len());
        let v = percentile_sorted(&sorted, p);
        let below = sorted.iter().filter(|&&x| x < v).count();
        prop_assert!(below < rank);
        prop_assert!(sorted.iter().filter(|&&x| x <= v).count() >= rank);
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(-5.0f64..5.0, 1..500), bins in 1usize..64) {
        let h = histogram(&values, bins);
        prop_assert_eq!(h.len(), bins);
        prop_assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), values.len());
        for w in h.windows(2) {
            prop_assert!(w[0].bin_high <= w[1].bin_low + 1e-12);
        }
    }
}
