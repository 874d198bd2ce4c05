//! Trace analytics and propagation simulation for wireless device-to-device
//! (D2D) content sharing.
//!
//! The crate is organised as a pipeline:
//!
//! * [`trace`] holds the domain types, the event log format and the
//!   relationship/permission records.
//! * [`synthgen`] produces calibrated synthetic traces with a ground-truth
//!   ledger.
//! * [`graphing`] turns events into an encounter graph and partitions users
//!   into encounter groups.
//! * [`netmetrics`] computes clustering, path statistics and power-law fits.
//! * [`traffic`] measures redundant (repeat) deliveries over time.
//! * [`influence`] builds per-group sharing forests and picks seed users.
//! * [`cascade`] replays propagation from a seed over later encounters.
//! * [`predictor`] extracts pairwise features and trains a linear classifier.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod error;
pub mod graphing;
pub mod influence;
pub mod netmetrics;
pub mod predictor;
pub mod synthgen;
pub mod trace;
pub mod traffic;
pub(crate) mod util;

pub use error::{Error, Result};
pub use trace::{Category, GeoPoint, SharingEvent, Tier, UserId};
