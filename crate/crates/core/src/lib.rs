//! Pricing, LTV control, vault accounting, market simulation and historical
//! replay for stablecoins backed by an overnight claim on equity shares.
//!
//! A vault locks shares at the official close `S_c` and mints `L·S_c`
//! stablecoins. Holders redeem at the next open `S_o`, recovering
//! `min(L·S_c, S_o)` per share. The overnight gap `G = S_o/S_c` drives
//! everything else.

pub mod backtest;
pub mod controller;
pub mod error;
pub mod exec;
pub mod gap_model;
pub mod market_sim;
pub mod normal;
pub mod pricing;
pub mod proxies;
pub mod report;
pub mod vault;

pub use error::{Error, Result};
pub use exec::Exec;
