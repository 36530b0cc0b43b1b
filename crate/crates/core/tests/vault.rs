use proptest::prelude::*;

use timebound_core::vault::{
    read_event_log, replay_ledger, run_dutch_auction, AuctionOutcome, AuctionState, BidderDemand,
    EngineConfig, SurplusRouting, VaultEngine, VaultStatus,
};
use timebound_core::Error;

#[derive(Debug, Clone)]
struct MintOp {
    shares: f64,
    ltv: f64,
    fee_rate: f64,
}

#[derive(Debug, Clone)]
enum Action {
    RepayFull,
    RepayShort(f64),
    Walk,
}

#[derive(Debug, Clone)]
struct Night {
    mints: Vec<MintOp>,
    gap: f64,
    actions: Vec<Action>,
    bids: Vec<(f64, f64)>,
    next_close: f64,
}

fn night() -> impl Strategy<Value = Night> {
    let mint =
        (0.1f64..10.0, 0.3f64..=1.0, 0.0f64..0.01).prop_map(|(shares, ltv, fee_rate)| MintOp {
            shares,
            ltv,
            fee_rate,
        });
    let action = prop_oneof![
        3 => Just(Action::RepayFull),
        1 => (0.0f64..0.999).prop_map(Action::RepayShort),
        1 => Just(Action::Walk),
    ];
    (
        prop::collection::vec(mint, 0..5),
        0.4f64..1.4,
        prop::collection::vec(action, 5),
        prop::collection::vec((0.3f64..1.2, 0.0f64..12.0), 0..4),
        50.0f64..150.0,
    )
        .prop_map(|(mints, gap, actions, bids, next_close)| Night {
            mints,
            gap,
            actions,
            bids,
            next_close,
        })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs()))
}

fn check_conservation(engine: &VaultEngine) -> Result<(), TestCaseError> {
    let ledger = engine.ledger();
    let outstanding: f64 = engine
        .positions()
        .filter(|p| !p.settled)
        .map(|p| p.minted)
        .sum();
    let locked: f64 = engine
        .positions()
        .filter(|p| !p.settled)
        .map(|p| p.shares_locked)
        .sum();
    prop_assert!(
        close(ledger.stablecoins_outstanding, outstanding),
        "outstanding {} vs {}",
        ledger.stablecoins_outstanding,
        outstanding
    );
    prop_assert!(
        close(ledger.shares_in_custody, locked + ledger.unsold_shares),
        "custody {} vs {}",
        ledger.shares_in_custody,
        locked + ledger.unsold_shares
    );
    prop_assert!(ledger.insurance_fund >= -1e-9);
    prop_assert!(ledger.fees_collected <= ledger.fees_accrued + 1e-9);
    Ok(())
}

fn run_sequence(
    nights: &[Night],
    fund: f64,
    routing: SurplusRouting,
) -> Result<VaultEngine, TestCaseError> {
    let config = EngineConfig {
        surplus_routing: routing,
        ..EngineConfig::default()
    };
    let mut engine = VaultEngine::new(config, 100.0, fund).unwrap();
    for n in nights {
        let anchor = engine.oracle().anchor_close();
        for m in &n.mints {
            engine.mint(m.shares, m.ltv, m.fee_rate).unwrap();
        }
        check_conservation(&engine)?;
        let open = anchor * n.gap;
        engine.open(open).unwrap();
        prop_assert!(matches!(engine.mint(1.0, 0.5, 0.0), Err(Error::Phase(_))));
        for (i, id) in engine.active_ids().into_iter().enumerate() {
            let p = engine.position(id).unwrap().clone();
            let returned = match n.actions[i % n.actions.len()] {
                Action::RepayFull => engine.redeem(id, p.minted, p.fee_owed()).unwrap(),
                Action::RepayShort(frac) => {
                    engine.redeem(id, p.minted * frac, p.fee_owed()).unwrap()
                }
                Action::Walk => 0.0,
            };
            prop_assert!(returned == 0.0 || returned == p.shares_locked);
            let status = engine.position(id).unwrap().status;
            prop_assert_eq!(returned > 0.0, status == VaultStatus::Repaid);
            check_conservation(&engine)?;
        }
        for id in engine.active_ids() {
            let VaultStatus::Defaulted { auction_id } =
                engine.expire_and_detect_default(id, true).unwrap()
            else {
                return Err(TestCaseError::fail("deadline must default"));
            };
            let demand: Vec<BidderDemand> = n
                .bids
                .iter()
                .enumerate()
                .map(|(j, &(f, q))| BidderDemand {
                    bidder: format!("b{j}"),
                    max_price: f * anchor,
                    quantity: q,
                })
                .collect();
            engine.run_auction(auction_id, &demand).unwrap();
            let s = engine.settle_default(id).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.holder_payout_per_unit));
            prop_assert!(s.fund_draw >= 0.0 && s.uncovered_shortfall >= -1e-12);
            prop_assert!(s.borrower_surplus >= 0.0);
            check_conservation(&engine)?;
        }
        engine.close(n.next_close).unwrap();
    }
    Ok(engine)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_sequences_conserve_value(
        nights in prop::collection::vec(night(), 1..8),
        fund in 0.0f64..500.0,
        to_fund in any::<bool>(),
    ) {
        let routing = if to_fund { SurplusRouting::InsuranceFund } else { SurplusRouting::Borrower };
        let engine = run_sequence(&nights, fund, routing)?;
        prop_assert!(engine.ledger().stablecoins_outstanding.abs() < 1e-6);

        let mut log = Vec::new();
        engine.write_event_log(&mut log).unwrap();
        let events = read_event_log(std::str::from_utf8(&log).unwrap()).unwrap();
        prop_assert_eq!(&events[..], engine.events());
        let replayed = replay_ledger(&events).unwrap();
        let live = engine.ledger();
        prop_assert!(close(replayed.insurance_fund, live.insurance_fund));
        prop_assert!(close(replayed.stablecoins_outstanding, live.stablecoins_outstanding));
        prop_assert!(close(replayed.shares_in_custody, live.shares_in_custody));
        prop_assert!(close(replayed.fees_collected, live.fees_collected));
        prop_assert!(close(replayed.unsold_shares, live.unsold_shares));
    }

    #[test]
    fn fees_are_the_only_fund_inflow_by_default(nights in prop::collection::vec(night(), 1..6)) {
        let engine = run_sequence(&nights, 100.0, SurplusRouting::Borrower)?;
        let draws: f64 = engine
            .events()
            .iter()
            .filter_map(|e| match &e.kind {
                timebound_core::vault::EventKind::Settle(s) => Some(s.fund_draw),
                _ => None,
            })
            .sum();
        let l = engine.ledger();
        prop_assert!(close(l.insurance_fund, 100.0 + l.fees_collected - draws));
    }

    #[test]
    fn auction_clears_at_highest_covering_tick(
        start in 1.0f64..500.0,
        dec_frac in 0.001f64..0.1,
        min_frac in 0.0f64..0.95,
        shares in 0.1f64..10.0,
        bids in prop::collection::vec((0.2f64..1.3, 0.0f64..6.0), 0..6),
    ) {
        let auction = AuctionState {
            auction_id: 1,
            vault_id: 1,
            shares,
            start_price: start,
            decrement_per_tick: dec_frac * start,
            min_price: min_frac * start,
            bids: Vec::new(),
            outcome: AuctionOutcome::Pending,
        };
        let demand: Vec<BidderDemand> = bids
            .iter()
            .enumerate()
            .map(|(i, &(f, q))| BidderDemand { bidder: format!("b{i}"), max_price: f * start, quantity: q })
            .collect();

        // brute force: every tick at or above the floor, keep the best covering price
        let mut best: Option<(u64, f64)> = None;
        let mut t = 0u64;
        loop {
            let p = start - t as f64 * dec_frac * start;
            if p < min_frac * start - 1e-9 * dec_frac * start {
                break;
            }
            let covered: f64 = demand.iter().filter(|d| d.max_price >= p).map(|d| d.quantity).sum();
            if covered >= shares && best.is_none_or(|(_, bp)| p > bp) {
                best = Some((t, p));
            }
            t += 1;
        }

        let done = run_dutch_auction(auction, &demand).unwrap();
        match (done.outcome, best) {
            (AuctionOutcome::Cleared { clearing_price, proceeds, tick }, Some((bt, bp))) => {
                prop_assert_eq!(tick, bt);
                prop_assert!((clearing_price - bp).abs() <= 1e-12 * start);
                prop_assert!((proceeds - clearing_price * shares).abs() <= 1e-9 * proceeds.max(1.0));
                prop_assert!(clearing_price <= start);
            }
            (AuctionOutcome::Failed, None) => {}
            (got, want) => prop_assert!(false, "engine {got:?}, brute force {want:?}"),
        }
    }
}

#[test]
fn repaid_vault_cannot_be_redeemed_twice() {
    let mut e = VaultEngine::new(EngineConfig::default(), 100.0, 0.0).unwrap();
    let (id, minted) = e.mint(2.0, 0.9, 0.0).unwrap();
    e.open(101.0).unwrap();
    assert_eq!(e.redeem(id, minted, 0.0).unwrap(), 2.0);
    assert!(matches!(e.redeem(id, minted, 0.0), Err(Error::State(_))));
}

#[test]
fn over_repayment_is_an_error() {
    let mut e = VaultEngine::new(EngineConfig::default(), 100.0, 0.0).unwrap();
    let (id, minted) = e.mint(1.0, 0.9, 0.0).unwrap();
    e.open(100.0).unwrap();
    assert!(matches!(
        e.redeem(id, minted * 1.01, 0.0),
        Err(Error::OverRepayment { .. })
    ));
}

#[test]
fn next_close_waits_for_unresolved_vaults() {
    let mut e = VaultEngine::new(EngineConfig::default(), 100.0, 0.0).unwrap();
    e.mint(1.0, 0.9, 0.0).unwrap();
    e.open(99.0).unwrap();
    assert!(matches!(e.close(99.0), Err(Error::State(_))));
}

#[test]
fn mint_above_ceiling_is_a_policy_error() {
    let config = EngineConfig {
        ltv_ceiling: 0.9,
        ..EngineConfig::default()
    };
    let mut e = VaultEngine::new(config, 100.0, 0.0).unwrap();
    assert!(matches!(e.mint(1.0, 0.95, 0.0), Err(Error::Policy(_))));
}

#[test]
fn corrupt_log_reports_line() {
    let err = read_event_log(
        "{\"seq\":0,\"event\":\"genesis\",\"anchor_close\":1,\"insurance_fund\":0}\nnot json\n",
    )
    .unwrap_err();
    assert!(matches!(err, Error::Data { line: 2, .. }));
}
