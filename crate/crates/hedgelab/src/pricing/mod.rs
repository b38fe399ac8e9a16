//! Instrument valuation: closed forms for European and digital options, a CRR
//! binomial tree for American options, Longstaff-Schwartz continuation models
//! for early-exercise decisions, and nested Monte Carlo with common random
//! numbers for the autocallable note.

mod autocallable;
mod binomial;
mod black_scholes;
mod lsmc;

pub use autocallable::price_autocallable_mc;
pub use binomial::{binomial_american, binomial_american_greeks};
pub use black_scholes::{bs_digital, bs_european, norm_cdf, norm_pdf};
pub use lsmc::{lsmc_exercise_decision, lsmc_fit, lsmc_price, ContinuationModel, ExerciseRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("invalid pricing input: {0}")]
    InvalidInput(String),
    #[error("finite-difference bump underflow (h = {h})")]
    BumpUnderflow { h: f64 },
    #[error("invalid pricer configuration: {0}")]
    InvalidConfig(String),
}

/// Price with spot sensitivities. `std_error` is the Monte Carlo standard
/// error of the price (zero for closed forms and trees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    pub std_error: f64,
}

impl Valuation {
    pub fn deterministic(price: f64, delta: f64, gamma: f64) -> Self {
        Self {
            price,
            delta,
            gamma,
            std_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricerConfig {
    /// Inner Monte Carlo paths per note valuation.
    pub n_mc_paths: usize,
    /// Relative spot bump for finite-difference Greeks.
    pub fd_bump_rel: f64,
    pub binomial_steps: usize,
    pub lsmc_basis_degree: usize,
    pub lsmc_training_paths: usize,
    /// Annual risk-free rate used for discounting and risk-neutral drift.
    pub rate: f64,
}

impl Default for PricerConfig {
    fn default() -> Self {
        Self {
            n_mc_paths: 2000,
            fd_bump_rel: 0.005,
            binomial_steps: 2000,
            lsmc_basis_degree: 3,
            lsmc_training_paths: 10_000,
            rate: 0.0,
        }
    }
}

impl PricerConfig {
    pub fn validate(&self) -> Result<(), PricingError> {
        if self.n_mc_paths < 1 || self.binomial_steps < 1 || self.lsmc_training_paths < 1 {
            return Err(PricingError::InvalidConfig(
                "pricer path/step counts must be >= 1".into(),
            ));
        }
        if !(self.fd_bump_rel > 0.0 && self.fd_bump_rel < 0.1) {
            return Err(PricingError::InvalidConfig(format!(
                "pricer.fd_bump_rel must be in (0, 0.1), got {}",
                self.fd_bump_rel
            )));
        }
        if !self.rate.is_finite() {
            return Err(PricingError::InvalidConfig("pricer.rate must be finite".into()));
        }
        Ok(())
    }
}

/// Central-difference delta and gamma of an arbitrary value function. The
/// pricer must be deterministic across the three evaluations (common random
/// numbers when it is a Monte Carlo estimator), otherwise the differences are
/// noise-dominated.
pub fn fd_greeks<F: FnMut(f64) -> f64>(
    mut pricer: F,
    spot: f64,
    bump_rel: f64,
) -> Result<(f64, f64), PricingError> {
    let h = bump_rel * spot;
    if !(h > 0.0) || spot - h <= 0.0 || spot + h == spot {
        return Err(PricingError::BumpUnderflow { h });
    }
    let up = pricer(spot + h);
    let mid = pricer(spot);
    let down = pricer(spot - h);
    let delta = (up - down) / (2.0 * h);
    let gamma = (up - 2.0 * mid + down) / (h * h);
    Ok((delta, gamma))
}
