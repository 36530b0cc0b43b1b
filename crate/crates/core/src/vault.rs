//! Vault lifecycle, oracle anchoring, Dutch-auction liquidation and
//! insurance-fund accounting.
//!
//! The engine is a single-threaded event processor. Every state transition
//! appends one [`EngineEvent`] with a strictly increasing sequence number;
//! the log can be written as newline-delimited JSON and replayed into ledger
//! totals with [`replay_ledger`].
//!
//! Night cycle:
//!
//! 1. `Closed { anchor_close }`: vaults are minted against the frozen close.
//! 2. [`VaultEngine::open`] publishes the open print. Vaults whose collateral
//!    is worth less than their liability default right away in
//!    [`VaultEngine::expire_and_detect_default`]; the others may redeem.
//! 3. The redemption deadline passes; unredeemed vaults default.
//! 4. Defaulted collateral goes through a descending-price auction, then
//!    [`VaultEngine::settle_default`] pays holders out of proceeds and the
//!    insurance fund.
//! 5. [`VaultEngine::close`] anchors the next session.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};

pub type VaultId = u64;
pub type AuctionId = u64;

/// Relative tolerance for "repayment equals liability".
const AMOUNT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum OraclePhase {
    Closed { anchor_close: f64 },
    Open { anchor_close: f64, open_price: f64 },
}

impl OraclePhase {
    pub fn anchor_close(&self) -> f64 {
        match *self {
            OraclePhase::Closed { anchor_close } | OraclePhase::Open { anchor_close, .. } => {
                anchor_close
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VaultStatus {
    Active,
    Repaid,
    Defaulted { auction_id: AuctionId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaultPosition {
    pub id: VaultId,
    pub shares_locked: f64,
    pub anchor_close: f64,
    pub ltv_at_mint: f64,
    /// Stablecoin units minted, in currency of the anchor close.
    pub minted: f64,
    pub fee_rate: f64,
    pub status: VaultStatus,
    pub settled: bool,
}

impl VaultPosition {
    pub fn fee_owed(&self) -> f64 {
        self.fee_rate * self.minted
    }
}

/// One bidder's willingness to buy: `quantity` shares at any price at or
/// below `max_price`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderDemand {
    pub bidder: String,
    pub max_price: f64,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub bidder: String,
    pub quantity: f64,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AuctionOutcome {
    Pending,
    Cleared {
        clearing_price: f64,
        proceeds: f64,
        tick: u64,
    },
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionState {
    pub auction_id: AuctionId,
    pub vault_id: VaultId,
    pub shares: f64,
    pub start_price: f64,
    pub decrement_per_tick: f64,
    pub min_price: f64,
    pub bids: Vec<Bid>,
    pub outcome: AuctionOutcome,
}

impl AuctionState {
    /// Price at `tick`, computed from the start price (no accumulated drift).
    pub fn price_at(&self, tick: u64) -> f64 {
        self.start_price - tick as f64 * self.decrement_per_tick
    }

    /// Number of ticks whose price is at or above `min_price`.
    pub fn tick_count(&self) -> u64 {
        if self.decrement_per_tick <= 0.0 {
            return 1;
        }
        let span = (self.start_price - self.min_price) / self.decrement_per_tick;
        // guard the floor against 49.999999 style rounding
        let mut n = (span + 1e-9).floor().max(0.0) as u64 + 1;
        while n > 1 && self.price_at(n - 1) < self.min_price - 1e-12 * self.start_price {
            n -= 1;
        }
        n
    }
}

/// Runs a descending-clock auction to completion.
///
/// The price starts at `start_price` and drops by `decrement_per_tick` each
/// tick. A bidder steps in (and stays in) at the first tick whose price is at
/// or below their `max_price`. The auction clears at the first tick where the
/// cumulative quantity covers all shares, at that tick's price; if the floor
/// is passed first it fails.
pub fn run_dutch_auction(
    mut auction: AuctionState,
    demand: &[BidderDemand],
) -> Result<AuctionState> {
    if auction.outcome != AuctionOutcome::Pending {
        return Err(Error::State(format!(
            "auction {} already resolved",
            auction.auction_id
        )));
    }
    check(
        "decrement_per_tick",
        auction.decrement_per_tick,
        auction.decrement_per_tick > 0.0,
        "> 0",
    )?;
    let mut entered = vec![false; demand.len()];
    let mut cumulative = 0.0;
    for tick in 0..auction.tick_count() {
        let price = auction.price_at(tick);
        for (i, d) in demand.iter().enumerate() {
            if !entered[i] && d.quantity > 0.0 && d.max_price >= price {
                entered[i] = true;
                cumulative += d.quantity;
                auction.bids.push(Bid {
                    bidder: d.bidder.clone(),
                    quantity: d.quantity,
                    tick,
                });
            }
        }
        if cumulative >= auction.shares {
            auction.outcome = AuctionOutcome::Cleared {
                clearing_price: price,
                proceeds: price * auction.shares,
                tick,
            };
            return Ok(auction);
        }
    }
    auction.outcome = AuctionOutcome::Failed;
    Ok(auction)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub stablecoins_outstanding: f64,
    pub insurance_fund: f64,
    /// Fees charged at mint time (accrued, whether or not collected).
    pub fees_accrued: f64,
    /// Fees actually paid into the fund.
    pub fees_collected: f64,
    pub shares_in_custody: f64,
    /// Shares from failed auctions still held by the protocol.
    pub unsold_shares: f64,
}

/// Where auction proceeds in excess of the liability go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurplusRouting {
    #[default]
    Borrower,
    InsuranceFund,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Protocol maximum LTV for new mints.
    pub ltv_ceiling: f64,
    /// Auction price step as a fraction of the start price.
    pub auction_decrement_frac: f64,
    /// Auction floor as a fraction of the start price.
    pub auction_min_price_frac: f64,
    pub surplus_routing: SurplusRouting,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            ltv_ceiling: 1.0,
            auction_decrement_frac: 0.005,
            auction_min_price_frac: 0.5,
            surplus_routing: SurplusRouting::Borrower,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            "ltv_ceiling",
            self.ltv_ceiling,
            self.ltv_ceiling > 0.0 && self.ltv_ceiling <= 1.0,
            "a value in (0, 1]",
        )?;
        check(
            "auction_decrement_frac",
            self.auction_decrement_frac,
            self.auction_decrement_frac > 0.0 && self.auction_decrement_frac < 1.0,
            "a value in (0, 1)",
        )?;
        check(
            "auction_min_price_frac",
            self.auction_min_price_frac,
            (0.0..=1.0).contains(&self.auction_min_price_frac),
            "a value in [0, 1]",
        )
    }
}

/// Result of settling one defaulted vault.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub vault_id: VaultId,
    pub liability: f64,
    pub proceeds: f64,
    pub fund_draw: f64,
    /// Holder recovery per unit of face, in [0, 1].
    pub holder_payout_per_unit: f64,
    pub fee_collected: f64,
    pub borrower_surplus: f64,
    pub uncovered_shortfall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Genesis {
        anchor_close: f64,
        insurance_fund: f64,
    },
    Mint {
        vault_id: VaultId,
        shares: f64,
        ltv: f64,
        minted: f64,
        fee: f64,
    },
    OracleOpen {
        open_price: f64,
    },
    OracleClose {
        anchor_close: f64,
    },
    RepaymentRejected {
        vault_id: VaultId,
        repayment: f64,
        fee_payment: f64,
    },
    Redeem {
        vault_id: VaultId,
        shares_returned: f64,
        burned: f64,
        fee_paid: f64,
    },
    Default {
        vault_id: VaultId,
        auction_id: AuctionId,
        undercollateralized: bool,
    },
    AuctionBid {
        auction_id: AuctionId,
        bidder: String,
        quantity: f64,
        tick: u64,
        price: f64,
    },
    AuctionCleared {
        auction_id: AuctionId,
        clearing_price: f64,
        proceeds: f64,
        tick: u64,
        shares_sold: f64,
    },
    AuctionFailed {
        auction_id: AuctionId,
        shares_unsold: f64,
    },
    Settle(Settlement),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct VaultEngine {
    config: EngineConfig,
    oracle: OraclePhase,
    positions: BTreeMap<VaultId, VaultPosition>,
    auctions: BTreeMap<AuctionId, AuctionState>,
    ledger: LedgerTotals,
    next_vault: VaultId,
    next_auction: AuctionId,
    events: Vec<EngineEvent>,
}

impl VaultEngine {
    pub fn new(config: EngineConfig, anchor_close: f64, insurance_fund: f64) -> Result<Self> {
        config.validate()?;
        check("anchor_close", anchor_close, anchor_close > 0.0, "> 0")?;
        check(
            "insurance_fund",
            insurance_fund,
            insurance_fund >= 0.0,
            ">= 0",
        )?;
        let mut engine = VaultEngine {
            config,
            oracle: OraclePhase::Closed { anchor_close },
            positions: BTreeMap::new(),
            auctions: BTreeMap::new(),
            ledger: LedgerTotals {
                insurance_fund,
                ..LedgerTotals::default()
            },
            next_vault: 1,
            next_auction: 1,
            events: Vec::new(),
        };
        engine.emit(EventKind::Genesis {
            anchor_close,
            insurance_fund,
        });
        Ok(engine)
    }

    fn emit(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(EngineEvent { seq, kind });
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn oracle(&self) -> OraclePhase {
        self.oracle
    }

    pub fn ledger(&self) -> &LedgerTotals {
        &self.ledger
    }

    pub fn events(&self) -> &[EngineEvent] {
        &self.events
    }

    pub fn position(&self, id: VaultId) -> Result<&VaultPosition> {
        self.positions
            .get(&id)
            .ok_or_else(|| Error::State(format!("unknown vault {id}")))
    }

    pub fn positions(&self) -> impl Iterator<Item = &VaultPosition> {
        self.positions.values()
    }

    pub fn auction(&self, id: AuctionId) -> Result<&AuctionState> {
        self.auctions
            .get(&id)
            .ok_or_else(|| Error::State(format!("unknown auction {id}")))
    }

    pub fn active_ids(&self) -> Vec<VaultId> {
        self.positions
            .values()
            .filter(|p| p.status == VaultStatus::Active)
            .map(|p| p.id)
            .collect()
    }

    /// Locks `shares` at the anchored close and mints `ltv·shares·S_c`.
    pub fn mint(&mut self, shares: f64, ltv: f64, fee_rate: f64) -> Result<(VaultId, f64)> {
        let OraclePhase::Closed { anchor_close } = self.oracle else {
            return Err(Error::Phase(
                "minting is only possible while the market is closed".into(),
            ));
        };
        check("shares", shares, shares > 0.0, "> 0")?;
        check("ltv", ltv, ltv > 0.0 && ltv <= 1.0, "a value in (0, 1]")?;
        check("fee_rate", fee_rate, fee_rate >= 0.0, ">= 0")?;
        if ltv > self.config.ltv_ceiling {
            return Err(Error::Policy(format!(
                "ltv {ltv} exceeds protocol ceiling {}",
                self.config.ltv_ceiling
            )));
        }
        let minted = ltv * shares * anchor_close;
        let id = self.next_vault;
        self.next_vault += 1;
        let position = VaultPosition {
            id,
            shares_locked: shares,
            anchor_close,
            ltv_at_mint: ltv,
            minted,
            fee_rate,
            status: VaultStatus::Active,
            settled: false,
        };
        let fee = position.fee_owed();
        self.positions.insert(id, position);
        self.ledger.stablecoins_outstanding += minted;
        self.ledger.shares_in_custody += shares;
        self.ledger.fees_accrued += fee;
        self.emit(EventKind::Mint {
            vault_id: id,
            shares,
            ltv,
            minted,
            fee,
        });
        Ok((id, minted))
    }

    /// Publishes the official open. Only valid from `Closed`.
    pub fn open(&mut self, open_price: f64) -> Result<()> {
        let OraclePhase::Closed { anchor_close } = self.oracle else {
            return Err(Error::Phase("oracle is already open".into()));
        };
        check("open_price", open_price, open_price > 0.0, "> 0")?;
        self.oracle = OraclePhase::Open {
            anchor_close,
            open_price,
        };
        self.emit(EventKind::OracleOpen { open_price });
        Ok(())
    }

    /// Anchors the next session at `close_price`. Every vault of the
    /// previous night must be resolved (repaid or defaulted) first.
    pub fn close(&mut self, close_price: f64) -> Result<()> {
        if !matches!(self.oracle, OraclePhase::Open { .. }) {
            return Err(Error::Phase("oracle is already closed".into()));
        }
        check("close_price", close_price, close_price > 0.0, "> 0")?;
        if let Some(id) = self.active_ids().first() {
            return Err(Error::State(format!(
                "vault {id} is still active; resolve it before the next close"
            )));
        }
        self.oracle = OraclePhase::Closed {
            anchor_close: close_price,
        };
        self.emit(EventKind::OracleClose {
            anchor_close: close_price,
        });
        Ok(())
    }

    /// All-or-nothing redemption: returns exactly `shares_locked` when the
    /// full liability and fee are paid, otherwise 0 and nothing changes.
    pub fn redeem(&mut self, id: VaultId, repayment: f64, fee_payment: f64) -> Result<f64> {
        if !matches!(self.oracle, OraclePhase::Open { .. }) {
            return Err(Error::Phase(
                "redemption opens with the official open print".into(),
            ));
        }
        check("repayment", repayment, repayment >= 0.0, ">= 0")?;
        check("fee_payment", fee_payment, fee_payment >= 0.0, ">= 0")?;
        let position = self.position(id)?.clone();
        if position.status != VaultStatus::Active {
            return Err(Error::State(format!(
                "vault {id} is {:?}, cannot redeem",
                position.status
            )));
        }
        let tol = AMOUNT_TOL * position.minted.max(1.0);
        if repayment > position.minted + tol {
            return Err(Error::OverRepayment {
                vault: id,
                owed: position.minted,
                offered: repayment,
            });
        }
        let fee = position.fee_owed();
        if repayment < position.minted - tol || fee_payment < fee - AMOUNT_TOL * fee.max(1.0) {
            self.emit(EventKind::RepaymentRejected {
                vault_id: id,
                repayment,
                fee_payment,
            });
            return Ok(0.0);
        }
        let p = self.positions.get_mut(&id).expect("checked above");
        p.status = VaultStatus::Repaid;
        p.settled = true;
        self.ledger.stablecoins_outstanding -= position.minted;
        self.ledger.shares_in_custody -= position.shares_locked;
        self.ledger.insurance_fund += fee;
        self.ledger.fees_collected += fee;
        self.emit(EventKind::Redeem {
            vault_id: id,
            shares_returned: position.shares_locked,
            burned: position.minted,
            fee_paid: fee,
        });
        Ok(position.shares_locked)
    }

    /// Marks the vault defaulted when its collateral at the open is worth less
    /// than its liability, or when the deadline passed without repayment.
    /// Spawns the liquidation auction on default.
    pub fn expire_and_detect_default(
        &mut self,
        id: VaultId,
        deadline_passed: bool,
    ) -> Result<VaultStatus> {
        let OraclePhase::Open { open_price, .. } = self.oracle else {
            return Err(Error::Phase(
                "default detection needs the open print".into(),
            ));
        };
        let position = self.position(id)?.clone();
        if position.status != VaultStatus::Active {
            return Ok(position.status);
        }
        let undercollateralized = open_price * position.shares_locked < position.minted;
        if !(undercollateralized || deadline_passed) {
            return Ok(VaultStatus::Active);
        }
        let auction_id = self.next_auction;
        self.next_auction += 1;
        let start = position.anchor_close;
        self.auctions.insert(
            auction_id,
            AuctionState {
                auction_id,
                vault_id: id,
                shares: position.shares_locked,
                start_price: start,
                decrement_per_tick: self.config.auction_decrement_frac * start,
                min_price: self.config.auction_min_price_frac * start,
                bids: Vec::new(),
                outcome: AuctionOutcome::Pending,
            },
        );
        let status = VaultStatus::Defaulted { auction_id };
        self.positions.get_mut(&id).expect("checked above").status = status;
        self.emit(EventKind::Default {
            vault_id: id,
            auction_id,
            undercollateralized,
        });
        Ok(status)
    }

    pub fn run_auction(
        &mut self,
        auction_id: AuctionId,
        demand: &[BidderDemand],
    ) -> Result<AuctionOutcome> {
        let auction = self.auction(auction_id)?.clone();
        let resolved = run_dutch_auction(auction, demand)?;
        for bid in &resolved.bids {
            self.emit(EventKind::AuctionBid {
                auction_id,
                bidder: bid.bidder.clone(),
                quantity: bid.quantity,
                tick: bid.tick,
                price: resolved.price_at(bid.tick),
            });
        }
        match resolved.outcome {
            AuctionOutcome::Cleared {
                clearing_price,
                proceeds,
                tick,
            } => self.emit(EventKind::AuctionCleared {
                auction_id,
                clearing_price,
                proceeds,
                tick,
                shares_sold: resolved.shares,
            }),
            AuctionOutcome::Failed => self.emit(EventKind::AuctionFailed {
                auction_id,
                shares_unsold: resolved.shares,
            }),
            AuctionOutcome::Pending => unreachable!("run_dutch_auction always resolves"),
        }
        let outcome = resolved.outcome;
        self.auctions.insert(auction_id, resolved);
        Ok(outcome)
    }

    /// Burns the defaulted vault's stablecoins against auction proceeds,
    /// drawing any shortfall from the insurance fund.
    pub fn settle_default(&mut self, id: VaultId) -> Result<Settlement> {
        let position = self.position(id)?.clone();
        let VaultStatus::Defaulted { auction_id } = position.status else {
            return Err(Error::State(format!("vault {id} is not defaulted")));
        };
        if position.settled {
            return Err(Error::State(format!("vault {id} already settled")));
        }
        let auction = self.auction(auction_id)?;
        let (proceeds, shares_sold) = match auction.outcome {
            AuctionOutcome::Pending => {
                return Err(Error::State(format!(
                    "auction {auction_id} for vault {id} is not resolved"
                )))
            }
            AuctionOutcome::Cleared { proceeds, .. } => (proceeds, auction.shares),
            AuctionOutcome::Failed => (0.0, 0.0),
        };
        let liability = position.minted;
        let shortfall = (liability - proceeds).max(0.0);
        let fund_draw = shortfall.min(self.ledger.insurance_fund);
        let surplus = (proceeds - liability).max(0.0);
        let fee_collected = position.fee_owed().min(surplus);
        let borrower_surplus = surplus - fee_collected;
        let holder_payout_per_unit = if liability > 0.0 {
            ((proceeds.min(liability) + fund_draw) / liability).clamp(0.0, 1.0)
        } else {
            1.0
        };

        self.ledger.insurance_fund -= fund_draw;
        self.ledger.insurance_fund += fee_collected;
        self.ledger.fees_collected += fee_collected;
        let borrower_surplus = match self.config.surplus_routing {
            SurplusRouting::Borrower => borrower_surplus,
            SurplusRouting::InsuranceFund => {
                self.ledger.insurance_fund += borrower_surplus;
                0.0
            }
        };
        self.ledger.stablecoins_outstanding -= liability;
        self.ledger.shares_in_custody -= shares_sold;
        self.ledger.unsold_shares += position.shares_locked - shares_sold;
        self.positions.get_mut(&id).expect("checked above").settled = true;

        let settlement = Settlement {
            vault_id: id,
            liability,
            proceeds,
            fund_draw,
            holder_payout_per_unit,
            fee_collected,
            borrower_surplus,
            uncovered_shortfall: shortfall - fund_draw,
        };
        self.emit(EventKind::Settle(settlement));
        Ok(settlement)
    }

    /// Writes the event log as newline-delimited JSON.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            let line = serde_json::to_string(e).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Parses a newline-delimited JSON event log.
pub fn read_event_log(text: &str) -> Result<Vec<EngineEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data {
                context: "event log".into(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Rebuilds ledger totals from an event log, checking sequence order.
pub fn replay_ledger(events: &[EngineEvent]) -> Result<LedgerTotals> {
    let mut ledger = LedgerTotals::default();
    let mut shares_by_vault: BTreeMap<VaultId, f64> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 {
            return Err(Error::Data {
                context: "event log".into(),
                line: i as u64 + 1,
                message: format!("sequence number {} out of order", e.seq),
            });
        }
        match &e.kind {
            EventKind::Genesis { insurance_fund, .. } => ledger.insurance_fund = *insurance_fund,
            EventKind::Mint {
                vault_id,
                shares,
                minted,
                fee,
                ..
            } => {
                ledger.stablecoins_outstanding += minted;
                ledger.shares_in_custody += shares;
                ledger.fees_accrued += fee;
                shares_by_vault.insert(*vault_id, *shares);
            }
            EventKind::Redeem {
                shares_returned,
                burned,
                fee_paid,
                ..
            } => {
                ledger.stablecoins_outstanding -= burned;
                ledger.shares_in_custody -= shares_returned;
                ledger.insurance_fund += fee_paid;
                ledger.fees_collected += fee_paid;
            }
            EventKind::Settle(s) => {
                let locked = shares_by_vault.get(&s.vault_id).copied().unwrap_or(0.0);
                let sold = if s.proceeds > 0.0 { locked } else { 0.0 };
                ledger.stablecoins_outstanding -= s.liability;
                ledger.shares_in_custody -= sold;
                ledger.unsold_shares += locked - sold;
                let surplus = (s.proceeds - s.liability).max(0.0);
                ledger.insurance_fund += s.fee_collected - s.fund_draw
                    + (surplus - s.fee_collected - s.borrower_surplus);
                ledger.fees_collected += s.fee_collected;
            }
            _ => {}
        }
    }
    Ok(ledger)
}
