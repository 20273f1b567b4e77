//! Real-time moving-horizon observers whose measurement inclusion rate, the
//! number of optimizer iterations run on a frozen window before new samples
//! are admitted, adapts on-line from cost contraction ratios.
//!
//! The crate also contains a seeded benchmark harness comparing fixed and
//! adaptive inclusion rates on a van der Pol oscillator with an unknown
//! damping gain.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cost;
pub mod dynamics;
pub mod invariants;
pub mod measurement;
pub mod observer;
pub mod rate_adapter;
pub mod report;
pub mod scenario;
pub mod solver;

pub use dynamics::{StateVector, SystemModel, VanDerPol};
pub use observer::{Observer, ObserverConfig, OnlineObserver};
pub use rate_adapter::{RateState, TimingSpec};
pub use solver::{BoxConstraint, SolveReport, SolverOptions};
