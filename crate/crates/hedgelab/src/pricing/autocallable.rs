//! Nested Monte Carlo valuation of the autocallable note with
//! finite-difference Greeks under common random numbers.
//!
//! Inner paths step between the note's remaining observation dates (monthly
//! by default) under the pricing measure (drift = risk-free rate, SABR vol
//! dynamics from the market parameters). One set of correlated normal
//! increments per inner path drives the base and both bumped spot paths, so
//! the finite differences cancel the Monte Carlo noise; without that, gamma
//! near a call barrier is noise-dominated.

use super::{PricerConfig, Valuation};
use crate::instruments::{remaining_observation_months, walk_note_flows, AutocallableSpec};
use crate::market::{spot_increment, vol_increment, RngStream, SabrParams};

/// Discounted value of the remaining note flows along one spot path observed
/// at `months`, discounting back to `t_now`.
fn discounted_flows(
    spec: &AutocallableSpec,
    months: &[u32],
    spots: &[f64],
    t_now: f64,
    rate: f64,
) -> f64 {
    let mut total = 0.0;
    walk_note_flows(spec, months, spots, &mut |t, amount| {
        total += amount * (-rate * (t - t_now)).exp();
    });
    total
}

/// Value, delta and gamma of the note alive at `t_now` in state
/// `(spot, vol_state)`. Degenerate zero-volatility states bypass the Monte
/// Carlo and evaluate the deterministic lifecycle exactly.
pub fn price_autocallable_mc(
    spec: &AutocallableSpec,
    spot: f64,
    vol_state: f64,
    t_now: f64,
    params: &SabrParams,
    config: &PricerConfig,
    rng: &RngStream,
) -> Valuation {
    let months = remaining_observation_months(spec, t_now);
    if months.is_empty() {
        return Valuation::deterministic(0.0, 0.0, 0.0);
    }
    let rate = config.rate;
    let h = config.fd_bump_rel * spot;

    // Interval lengths between observations, starting from t_now.
    let mut dts = Vec::with_capacity(months.len());
    let mut prev = t_now;
    for &m in &months {
        let t = m as f64 / 12.0;
        dts.push(t - prev);
        prev = t;
    }

    // The volatility step is multiplicative, so a zero vol state stays zero
    // and the path is deterministic: evaluate the lifecycle exactly.
    if vol_state < 1e-14 {
        let price_at = |s0: f64| {
            let mut spots = Vec::with_capacity(months.len());
            let mut s = s0;
            for &dt in &dts {
                s *= (rate * dt).exp();
                spots.push(s);
            }
            discounted_flows(spec, &months, &spots, t_now, rate)
        };
        let price = price_at(spot);
        let delta = (price_at(spot + h) - price_at(spot - h)) / (2.0 * h);
        let gamma = (price_at(spot + h) - 2.0 * price + price_at(spot - h)) / (h * h);
        return Valuation {
            price,
            delta,
            gamma,
            std_error: 0.0,
        };
    }

    // Pricing-measure drift: replace the market drift with the risk-free rate.
    let pricing_params = SabrParams { mu: rate, ..*params };

    let n = config.n_mc_paths;
    let n_obs = months.len();
    let mut sum_mid = 0.0;
    let mut sum_sq_mid = 0.0;
    let mut sum_up = 0.0;
    let mut sum_down = 0.0;

    let mut increments: Vec<(f64, f64)> = vec![(0.0, 0.0); n_obs];
    let mut vols: Vec<f64> = vec![0.0; n_obs];
    let mut spots_buf: Vec<f64> = vec![0.0; n_obs];

    for p in 0..n {
        let mut sampler = rng.substream(p as u64).sampler();
        for inc in increments.iter_mut() {
            *inc = sampler.correlated_normals(pricing_params.rho);
        }
        // The vol path does not depend on the spot, compute it once and reuse
        // it for all three bump evaluations (common random numbers).
        let mut v = vol_state;
        for (i, &(_, z2)) in increments.iter().enumerate() {
            vols[i] = v;
            v = vol_increment(v, &pricing_params, dts[i], z2);
        }

        let mut eval = |s0: f64| -> f64 {
            let mut s = s0;
            for i in 0..n_obs {
                s = spot_increment(s, vols[i], &pricing_params, dts[i], increments[i].0);
                spots_buf[i] = s;
            }
            discounted_flows(spec, &months, &spots_buf, t_now, rate)
        };

        let mid = eval(spot);
        sum_mid += mid;
        sum_sq_mid += mid * mid;
        sum_up += eval(spot + h);
        sum_down += eval(spot - h);
    }

    let nf = n as f64;
    let price = sum_mid / nf;
    let up = sum_up / nf;
    let down = sum_down / nf;
    let var = ((sum_sq_mid / nf - price * price).max(0.0)) * nf / (nf - 1.0).max(1.0);
    Valuation {
        price,
        delta: (up - down) / (2.0 * h),
        gamma: (up - 2.0 * price + down) / (h * h),
        std_error: (var / nf).sqrt(),
    }
}
