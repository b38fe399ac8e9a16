//! Hedging laboratory for an autocallable structured note.
//!
//! The crate simulates an index under SABR stochastic volatility, prices the
//! note and vanilla/digital hedge options, wraps the trader's book in a
//! sequential rebalancing environment, and compares baseline hedging
//! disciplines against a distributional reinforcement-learning policy on
//! tail-risk metrics.

pub mod cli;
pub mod config;
pub mod drl;
pub mod env;
pub mod instruments;
pub mod market;
pub mod pricing;
pub mod risk;
pub mod strategies;
