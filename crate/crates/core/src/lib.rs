//! Online tick-by-tick limit-order-book mid-price forecasting built around
//! an optimum-output LSTM cell: per trading event, the cell's hidden output
//! is replaced by whichever internal gate or state an online regression
//! against the current mid-price ranks as most important.
//!
//! The crate also ships the prototype LSTM, a GRU, the persistence and
//! naive-constant baselines, and the progressive train/absorb evaluation
//! protocol that compares them.

pub mod cells;
pub mod error;
pub mod learning;
pub mod lob;
pub mod models;
pub mod numerics;
pub mod protocol;

pub use error::{Error, Result};
