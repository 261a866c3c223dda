//! Deterministic peer-to-peer energy market simulator.
//!
//! The crate is organised around the life of an energy trade:
//!
//! * [`ledger`] is the proof-of-authority chain that verifies, records and
//!   event-streams every transaction.
//! * [`market`] is the continuous double auction that turns offers and bids
//!   into settlements, which land on the ledger as a Sell/Buy pair.
//! * [`simgen`] drives agents through the market and the ledger, producing a
//!   labelled dataset with injected fraud.
//! * [`pipeline`], [`models`] and [`eval`] are the preprocessing, classifiers
//!   and metrics used both for the transaction-status task and for fraud.
//! * [`sentinel`] listens to ledger events, scores transactions and places
//!   holds that a reviewer later releases or rejects.
//! * [`forecast`] covers hourly demand forecasting and the price
//!   stabilisation experiment.

#[macro_use]
mod macros;

pub mod dataset;
pub mod eval;
pub mod fixed;
pub mod forecast;
pub mod ledger;
pub mod market;
pub mod matrix;
pub mod models;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod sentinel;
pub mod simgen;
pub mod time;

pub use fixed::{Money, Mwh};
pub use matrix::Matrix;
pub use time::Timestamp;
