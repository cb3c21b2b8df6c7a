//! Two-sided marketplace experiments: an exact finite-market simulator of
//! the consideration / application / acceptance booking process, and the
//! large-market limits of booking rates, treatment effects and the bias and
//! variance of customer- and listing-randomized experiments.

pub mod design;
pub mod error;
pub mod experiment;
pub mod market_sim;
pub mod meanfield;
pub mod oracle;
pub mod stats;
pub mod sweeps;

pub use design::{Allocation, Arm, Design, DesignKind};
pub use error::{Error, Result};
pub use experiment::{GteReference, RunOptions, RunSummary};
pub use market_sim::{BookingTally, FiniteMarket, Simulator};
pub use meanfield::{BiasReport, MarketSpec, RateMatrices};
