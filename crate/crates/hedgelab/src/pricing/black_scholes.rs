//! Black-Scholes closed forms for European and cash-or-nothing digital
//! options, with analytic delta and gamma. Zero volatility or zero time to
//! maturity degrade to the discounted deterministic forward with one-sided
//! Greeks.

use super::{PricingError, Valuation};
use crate::instruments::OptionKind;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn d12(spot: f64, strike: f64, vol: f64, rate: f64, ttm: f64) -> (f64, f64) {
    let sig_sqrt_t = vol * ttm.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * ttm) / sig_sqrt_t;
    (d1, d1 - sig_sqrt_t)
}

fn validate(spot: f64, strike: f64, vol: f64, ttm: f64) -> Result<(), PricingError> {
    if !(spot > 0.0) || !(strike > 0.0) {
        return Err(PricingError::InvalidInput(format!(
            "spot and strike must be > 0 (spot={spot}, strike={strike})"
        )));
    }
    if vol < 0.0 || ttm < 0.0 {
        return Err(PricingError::InvalidInput(format!(
            "vol and time to maturity must be >= 0 (vol={vol}, ttm={ttm})"
        )));
    }
    Ok(())
}

/// European call/put under Black-Scholes.
pub fn bs_european(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
) -> Valuation {
    validate(spot, strike, vol, ttm).expect("invalid Black-Scholes inputs");
    let is_call = kind.is_call();
    let disc_k = strike * (-rate * ttm).exp();

    if vol * ttm.sqrt() < 1e-12 {
        // Deterministic forward: discounted intrinsic, one-sided Greeks.
        let (price, delta) = if is_call {
            let itm = spot >= disc_k;
            ((spot - disc_k).max(0.0), if itm { 1.0 } else { 0.0 })
        } else {
            let itm = spot <= disc_k;
            ((disc_k - spot).max(0.0), if itm { -1.0 } else { 0.0 })
        };
        return Valuation::deterministic(price, delta, 0.0);
    }

    let (d1, d2) = d12(spot, strike, vol, rate, ttm);
    let gamma = norm_pdf(d1) / (spot * vol * ttm.sqrt());
    if is_call {
        Valuation::deterministic(
            spot * norm_cdf(d1) - disc_k * norm_cdf(d2),
            norm_cdf(d1),
            gamma,
        )
    } else {
        Valuation::deterministic(
            disc_k * norm_cdf(-d2) - spot * norm_cdf(-d1),
            norm_cdf(d1) - 1.0,
            gamma,
        )
    }
}

/// Cash-or-nothing digital: pays `cash_amount` when the spot finishes beyond
/// the strike (inclusive convention handled at settlement; the closed form is
/// insensitive to the boundary).
pub fn bs_digital(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
    cash_amount: f64,
) -> Valuation {
    validate(spot, strike, vol, ttm).expect("invalid digital pricing inputs");
    let is_call = kind.is_call();
    let disc = (-rate * ttm).exp();
    let disc_k = strike * disc;

    if vol * ttm.sqrt() < 1e-12 {
        let pays = if is_call { spot >= disc_k } else { spot < disc_k };
        let price = if pays { cash_amount * disc } else { 0.0 };
        return Valuation::deterministic(price, 0.0, 0.0);
    }

    let (d1, d2) = d12(spot, strike, vol, rate, ttm);
    let sig_sqrt_t = vol * ttm.sqrt();
    // d(price)/dS for the call: cash * disc * pdf(d2) / (S * vol * sqrt(T)).
    let call_delta = cash_amount * disc * norm_pdf(d2) / (spot * sig_sqrt_t);
    let call_gamma = -cash_amount * disc * norm_pdf(d2) * d1 / (spot * spot * sig_sqrt_t * sig_sqrt_t);
    if is_call {
        Valuation::deterministic(cash_amount * disc * norm_cdf(d2), call_delta, call_gamma)
    } else {
        Valuation::deterministic(cash_amount * disc * norm_cdf(-d2), -call_delta, -call_gamma)
    }
}
