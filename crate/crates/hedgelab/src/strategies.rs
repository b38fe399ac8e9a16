//! Hedging policies behind one interface: observation in, action in `[0, 1]`
//! out.
//!
//! `DeltaNeutral` hedges 0% of the gamma (the environment's underlying leg
//! still zeroes delta), `DeltaGammaNeutral` picks the action that makes the
//! hedge book offset the client gamma exactly, `None` is the fully unhedged
//! arm and must run in an environment with the automatic delta leg disabled.

use crate::drl::Actor;
use crate::env::{EnvConfig, Observation, TraceRow};

#[derive(Debug, Clone)]
pub enum Strategy {
    /// No trades at all (pair with `auto_delta_hedge = false`).
    None,
    DeltaNeutral,
    DeltaGammaNeutral,
    ConstantFraction(f64),
    RlPolicy(Actor),
}

impl Strategy {
    /// Parse the CLI form: `none`, `delta`, `delta-gamma`, `const:<c>`.
    pub fn parse_baseline(s: &str) -> Option<Strategy> {
        match s {
            "none" => Some(Strategy::None),
            "delta" => Some(Strategy::DeltaNeutral),
            "delta-gamma" => Some(Strategy::DeltaGammaNeutral),
            _ => s.strip_prefix("const:").and_then(|c| {
                let c: f64 = c.parse().ok()?;
                (0.0..=1.0).contains(&c).then_some(Strategy::ConstantFraction(c))
            }),
        }
    }

    /// Action for the current observation. The delta-gamma action saturates
    /// at 1 when the multiplier is below 1 (full offset unreachable).
    pub fn act(&self, obs: &Observation, config: &EnvConfig) -> f64 {
        match self {
            Strategy::None | Strategy::DeltaNeutral => 0.0,
            Strategy::DeltaGammaNeutral => {
                if config.max_hedge_multiplier <= 0.0 {
                    0.0
                } else {
                    (1.0 / config.max_hedge_multiplier).min(1.0)
                }
            }
            Strategy::ConstantFraction(c) => c.clamp(0.0, 1.0),
            Strategy::RlPolicy(actor) => actor.act(&obs.features),
        }
    }
}

/// Average over rebalance instants of the fraction of client gamma offset by
/// the hedge book, `hedge_gamma / (-client_gamma)`, skipping instants with no
/// material client gamma. Equals `action * multiplier` under the
/// environment's trade mapping whenever the instrument can deliver the
/// target, and 1.0 for an exact delta-gamma-neutral book. Note that a
/// far-out-of-the-money digital carries no gamma, so the digital-hedged book
/// cannot track its target at deeply fallen spots.
pub fn gamma_ratio(trace: &[TraceRow]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in trace {
        if row.gamma_client.abs() > 1e-9 {
            sum += row.gamma_hedge / -row.gamma_client;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
