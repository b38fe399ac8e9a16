//! Cox-Ross-Rubinstein binomial tree with early exercise at every node. Used
//! as the American-option valuation workhorse and as the oracle the
//! Longstaff-Schwartz prices are accepted against.

use crate::instruments::OptionKind;

fn intrinsic(is_call: bool, spot: f64, strike: f64) -> f64 {
    if is_call {
        (spot - strike).max(0.0)
    } else {
        (strike - spot).max(0.0)
    }
}

/// American price with tree-node delta and gamma: delta from the first-step
/// nodes, gamma from the second-step nodes. Node-derived Greeks avoid the
/// jagged bump sensitivity of re-treeing under a small spot bump.
pub fn binomial_american_greeks(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
    steps: usize,
) -> crate::pricing::Valuation {
    assert!(steps >= 2, "node greeks need at least two steps");
    let is_call = kind.is_call();
    if ttm == 0.0 || vol < 1e-12 {
        let v = binomial_american(kind, spot, strike, vol, rate, ttm, steps);
        let delta = if v > 0.0 {
            if is_call {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        };
        return crate::pricing::Valuation::deterministic(v, delta, 0.0);
    }

    let dt = ttm / steps as f64;
    let u = (vol * dt.sqrt()).exp();
    let disc = (-rate * dt).exp();
    let p = ((rate * dt).exp() - 1.0 / u) / (u - 1.0 / u);
    assert!((0.0..=1.0).contains(&p), "tree step too coarse (p = {p})");

    let mut values: Vec<f64> = (0..=steps)
        .map(|j| intrinsic(is_call, spot * u.powi(2 * j as i32 - steps as i32), strike))
        .collect();
    let mut level2 = [0.0; 3];
    let mut level1 = [0.0; 2];
    for i in (0..steps).rev() {
        for j in 0..=i {
            let s = spot * u.powi(2 * j as i32 - i as i32);
            let cont = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            values[j] = cont.max(intrinsic(is_call, s, strike));
        }
        if i == 2 {
            level2.copy_from_slice(&values[..3]);
        }
        if i == 1 {
            level1.copy_from_slice(&values[..2]);
        }
    }

    let s_u = spot * u;
    let s_d = spot / u;
    let delta = (level1[1] - level1[0]) / (s_u - s_d);
    let s_uu = spot * u * u;
    let s_dd = spot / (u * u);
    let d_up = (level2[2] - level2[1]) / (s_uu - spot);
    let d_down = (level2[1] - level2[0]) / (spot - s_dd);
    let gamma = (d_up - d_down) / (0.5 * (s_uu - s_dd));
    crate::pricing::Valuation::deterministic(values[0], delta, gamma)
}

/// American option price on a CRR tree with `steps` time steps.
pub fn binomial_american(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
    steps: usize,
) -> f64 {
    assert!(steps >= 1, "binomial tree needs at least one step");
    assert!(spot > 0.0 && strike > 0.0 && vol >= 0.0 && ttm >= 0.0);
    let is_call = kind.is_call();

    if ttm == 0.0 {
        return intrinsic(is_call, spot, strike);
    }
    if vol < 1e-12 {
        // Deterministic path: best exercise along s_t = spot * e^{rt}.
        let dt = ttm / steps as f64;
        let mut best = intrinsic(is_call, spot, strike);
        for i in 1..=steps {
            let t = dt * i as f64;
            let v = (-rate * t).exp() * intrinsic(is_call, spot * (rate * t).exp(), strike);
            best = best.max(v);
        }
        return best;
    }

    let dt = ttm / steps as f64;
    let u = (vol * dt.sqrt()).exp();
    let disc = (-rate * dt).exp();
    let p = ((rate * dt).exp() - 1.0 / u) / (u - 1.0 / u);
    assert!(
        (0.0..=1.0).contains(&p),
        "tree step too coarse for these parameters (p = {p})"
    );

    // Node (i, j) spot = spot * u^(2j - i).
    let mut values: Vec<f64> = (0..=steps)
        .map(|j| intrinsic(is_call, spot * u.powi(2 * j as i32 - steps as i32), strike))
        .collect();
    for i in (0..steps).rev() {
        for j in 0..=i {
            let s = spot * u.powi(2 * j as i32 - i as i32);
            let cont = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            values[j] = cont.max(intrinsic(is_call, s, strike));
        }
    }
    values[0]
}
