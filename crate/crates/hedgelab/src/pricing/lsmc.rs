//! Longstaff-Schwartz continuation-value models for American options.
//!
//! Backward induction regresses discounted continuation values on polynomial
//! features of moneyness `m = spot / strike`, with one coefficient row per
//! exercise date. Pooling paths across several strikes (with values
//! normalized by strike) makes a single model reusable for any strike via the
//! moneyness feature; time to maturity enters through the per-date rows since
//! it is constant within a date's regression. Rank-deficient regressions fall
//! back to a lower polynomial degree and are flagged on the model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PricerConfig, PricingError};
use crate::instruments::OptionKind;
use crate::market::PathSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExerciseRow {
    /// Time of the exercise date, measured from the start of the fitted paths.
    pub date: f64,
    /// Time to maturity at this date.
    pub tau: f64,
    /// Polynomial coefficients in moneyness, constant term first. `None` when
    /// no in-the-money training data reached this date (exercise is then
    /// never prescribed here).
    pub coeffs: Option<Vec<f64>>,
    pub degree_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationModel {
    pub kind: OptionKind,
    pub degree: usize,
    pub maturity: f64,
    pub rate: f64,
    pub strikes: Vec<f64>,
    /// One row per exercise date strictly before maturity, ascending.
    pub rows: Vec<ExerciseRow>,
    /// True when any date's regression fell back to a lower degree.
    pub fallback: bool,
}

fn one_unit_intrinsic(kind: OptionKind, spot: f64, strike: f64) -> f64 {
    if kind.is_call() {
        (spot - strike).max(0.0)
    } else {
        (strike - spot).max(0.0)
    }
}

fn poly_eval(coeffs: &[f64], m: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * m + c;
    }
    acc
}

/// Least-squares polynomial fit of `ys` on powers of `xs`, reducing the
/// degree until the design matrix has full rank. Returns the coefficients and
/// whether a fallback happened.
fn fit_poly(xs: &[f64], ys: &[f64], mut degree: usize) -> (Vec<f64>, bool) {
    let n = xs.len();
    let mut fell_back = false;
    while degree + 1 > n {
        degree -= 1;
        fell_back = true;
    }
    loop {
        let mut x = DMatrix::<f64>::zeros(n, degree + 1);
        for (r, &m) in xs.iter().enumerate() {
            let mut p = 1.0;
            for c in 0..=degree {
                x[(r, c)] = p;
                p *= m;
            }
        }
        let y = DVector::from_column_slice(ys);
        let svd = x.svd(true, true);
        let max_sv = svd.singular_values.max();
        let eps = max_sv * 1e-10;
        let rank = svd.rank(eps);
        if rank < degree + 1 && degree > 0 {
            degree -= 1;
            fell_back = true;
            continue;
        }
        let beta = svd
            .solve(&y, eps)
            .expect("svd least-squares solve cannot fail with computed u/v");
        return (beta.iter().copied().collect(), fell_back);
    }
}

/// Fit a continuation model on simulated paths. Exercise dates are the path
/// grid nodes strictly before `maturity` (the start node included); the path
/// grid must contain the maturity.
pub fn lsmc_fit(
    paths: &PathSet,
    kind: OptionKind,
    strikes: &[f64],
    maturity: f64,
    rate: f64,
    config: &PricerConfig,
) -> Result<ContinuationModel, PricingError> {
    if !kind.is_american() {
        return Err(PricingError::InvalidInput(
            "continuation models apply to American options".into(),
        ));
    }
    if strikes.is_empty() || strikes.iter().any(|&k| !(k > 0.0)) {
        return Err(PricingError::InvalidInput("strikes must be positive".into()));
    }
    if paths.n_paths < config.lsmc_training_paths {
        return Err(PricingError::InvalidInput(format!(
            "lsmc_fit needs at least {} training paths, got {}",
            config.lsmc_training_paths, paths.n_paths
        )));
    }
    let grid = &paths.grid;
    let mat_idx = ((maturity - grid.t0) / grid.dt).round() as usize;
    if mat_idx == 0 || mat_idx > grid.n_steps || (grid.time(mat_idx) - maturity).abs() > 1e-9 {
        return Err(PricingError::InvalidInput(format!(
            "path grid does not contain the maturity {maturity}"
        )));
    }

    let n = paths.n_paths;
    let ns = strikes.len();
    // Per (strike, path) state: the realized cash flow under the rule fitted
    // so far and the time it pays.
    let mut cash = vec![0.0; ns * n];
    let mut pay_t = vec![maturity; ns * n];
    for (k, &strike) in strikes.iter().enumerate() {
        for p in 0..n {
            cash[k * n + p] = one_unit_intrinsic(kind, paths.spot(p, mat_idx), strike);
        }
    }

    let mut rows_rev: Vec<ExerciseRow> = Vec::with_capacity(mat_idx);
    let mut any_fallback = false;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut idx: Vec<usize> = Vec::new();

    for i in (0..mat_idx).rev() {
        let t = grid.time(i);
        let tau = maturity - t;
        xs.clear();
        ys.clear();
        idx.clear();
        for (k, &strike) in strikes.iter().enumerate() {
            for p in 0..n {
                let spot = paths.spot(p, i);
                if one_unit_intrinsic(kind, spot, strike) > 0.0 {
                    let j = k * n + p;
                    xs.push(spot / strike);
                    ys.push((-rate * (pay_t[j] - t)).exp() * cash[j] / strike);
                    idx.push(j);
                }
            }
        }

        if xs.is_empty() {
            rows_rev.push(ExerciseRow {
                date: t,
                tau,
                coeffs: None,
                degree_used: config.lsmc_basis_degree,
            });
            continue;
        }

        let (coeffs, fell_back) = fit_poly(&xs, &ys, config.lsmc_basis_degree);
        any_fallback |= fell_back;

        for (r, &j) in idx.iter().enumerate() {
            let m = xs[r];
            let strike = strikes[j / n];
            let intrinsic = one_unit_intrinsic(kind, m * strike, strike);
            let continuation = strike * poly_eval(&coeffs, m);
            if intrinsic > continuation {
                cash[j] = intrinsic;
                pay_t[j] = t;
            }
        }

        let degree_used = coeffs.len() - 1;
        rows_rev.push(ExerciseRow {
            date: t,
            tau,
            coeffs: Some(coeffs),
            degree_used,
        });
    }

    rows_rev.reverse();
    Ok(ContinuationModel {
        kind,
        degree: config.lsmc_basis_degree,
        maturity,
        rate,
        strikes: strikes.to_vec(),
        rows: rows_rev,
        fallback: any_fallback,
    })
}

impl ContinuationModel {
    /// Row governing a decision at time `t`: the nearest exercise date at or
    /// before `t`, or the first row when `t` precedes the grid.
    pub fn row_at(&self, t: f64) -> &ExerciseRow {
        let mut chosen = &self.rows[0];
        for row in &self.rows {
            if row.date <= t + 1e-9 {
                chosen = row;
            } else {
                break;
            }
        }
        chosen
    }

    /// Predicted continuation value of one unit at the given moneyness/date.
    pub fn continuation(&self, spot: f64, t: f64, strike: f64) -> f64 {
        match &self.row_at(t).coeffs {
            None => f64::INFINITY,
            Some(c) => strike * poly_eval(c, spot / strike),
        }
    }
}

/// Holder-optimal exercise test: true iff intrinsic strictly exceeds the
/// predicted continuation value.
pub fn lsmc_exercise_decision(
    model: &ContinuationModel,
    spot: f64,
    t: f64,
    kind: OptionKind,
    strike: f64,
) -> bool {
    debug_assert_eq!(kind.is_call(), model.kind.is_call());
    let intrinsic = one_unit_intrinsic(kind, spot, strike);
    if intrinsic <= 0.0 {
        return false;
    }
    intrinsic > model.continuation(spot, t, strike)
}

/// Price one unit by applying the fitted exercise rule to an independent path
/// set. Returns `(price, std_error)`. Decisions happen at the model's
/// exercise dates, which must lie on the evaluation grid.
pub fn lsmc_price(model: &ContinuationModel, paths: &PathSet, strike: f64) -> (f64, f64) {
    let grid = &paths.grid;
    let mat_idx = ((model.maturity - grid.t0) / grid.dt).round() as usize;
    assert!(
        (grid.time(mat_idx) - model.maturity).abs() < 1e-9,
        "evaluation grid does not contain the model maturity"
    );
    let decision_nodes: Vec<usize> = model
        .rows
        .iter()
        .map(|row| {
            let i = ((row.date - grid.t0) / grid.dt).round() as usize;
            assert!(
                (grid.time(i) - row.date).abs() < 1e-9,
                "exercise date {} not on the evaluation grid",
                row.date
            );
            i
        })
        .collect();

    let n = paths.n_paths;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for p in 0..n {
        let mut value = 0.0;
        let mut stopped = false;
        for (row, &node) in model.rows.iter().zip(&decision_nodes) {
            let spot = paths.spot(p, node);
            if lsmc_exercise_decision(model, spot, row.date, model.kind, strike) {
                value = (-model.rate * (row.date - grid.t0)).exp()
                    * one_unit_intrinsic(model.kind, spot, strike);
                stopped = true;
                break;
            }
        }
        if !stopped {
            value = (-model.rate * (model.maturity - grid.t0)).exp()
                * one_unit_intrinsic(model.kind, paths.spot(p, mat_idx), strike);
        }
        sum += value;
        sum_sq += value * value;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_paths, RngStream, SabrParams, TimeGrid};
    use crate::pricing::binomial_american;

    fn gbm(vol: f64, rate: f64, spot0: f64) -> SabrParams {
        SabrParams {
            spot0,
            mu: rate,
            sigma0: vol,
            beta: 1.0,
            rho: 0.0,
            nu: 0.0,
        }
    }

    fn small_config(paths: usize) -> PricerConfig {
        PricerConfig {
            lsmc_training_paths: paths,
            ..PricerConfig::default()
        }
    }

    #[test]
    fn zero_vol_itm_put_exercises_at_start() {
        let rate = 0.05;
        let grid = TimeGrid::new(12, 1.0 / 12.0);
        let paths = simulate_paths(&gbm(0.0, rate, 90.0), &grid, 64, &RngStream::new(1, 0)).unwrap();
        let model = lsmc_fit(
            &paths,
            OptionKind::AmericanPut,
            &[100.0],
            1.0,
            rate,
            &small_config(64),
        )
        .unwrap();
        assert!(model.fallback, "flat paths must trigger a degree fallback");
        assert!(lsmc_exercise_decision(
            &model,
            90.0,
            0.0,
            OptionKind::AmericanPut,
            100.0
        ));
    }

    #[test]
    fn zero_intrinsic_never_exercises() {
        let grid = TimeGrid::new(12, 1.0 / 12.0);
        let paths =
            simulate_paths(&gbm(0.2, 0.0, 100.0), &grid, 2000, &RngStream::new(2, 0)).unwrap();
        let model = lsmc_fit(
            &paths,
            OptionKind::AmericanPut,
            &[100.0],
            1.0,
            0.0,
            &small_config(2000),
        )
        .unwrap();
        for t in [0.0, 0.25, 0.5, 0.9] {
            assert!(!lsmc_exercise_decision(
                &model,
                150.0,
                t,
                OptionKind::AmericanPut,
                100.0
            ));
        }
    }

    #[test]
    fn deep_itm_put_with_positive_rate_exercises() {
        let rate = 0.05;
        let grid = TimeGrid::new(12, 1.0 / 12.0);
        let paths =
            simulate_paths(&gbm(0.2, rate, 100.0), &grid, 5000, &RngStream::new(3, 0)).unwrap();
        let model = lsmc_fit(
            &paths,
            OptionKind::AmericanPut,
            &[80.0, 90.0, 100.0, 110.0, 120.0],
            1.0,
            rate,
            &small_config(5000),
        )
        .unwrap();
        // Intrinsic 99 dominates any continuation bounded by K e^{-r tau} < 100.
        assert!(lsmc_exercise_decision(
            &model,
            1.0,
            0.5,
            OptionKind::AmericanPut,
            100.0
        ));
    }

    #[test]
    fn degree_zero_compares_against_unconditional_mean() {
        let grid = TimeGrid::new(4, 0.25);
        let paths =
            simulate_paths(&gbm(0.2, 0.0, 100.0), &grid, 4000, &RngStream::new(4, 0)).unwrap();
        let config = PricerConfig {
            lsmc_basis_degree: 0,
            lsmc_training_paths: 4000,
            ..PricerConfig::default()
        };
        let model =
            lsmc_fit(&paths, OptionKind::AmericanPut, &[100.0], 1.0, 0.0, &config).unwrap();
        for row in &model.rows {
            if let Some(c) = &row.coeffs {
                assert_eq!(c.len(), 1, "degree-0 basis must have a single coefficient");
            }
        }
    }

    #[test]
    fn fitted_rule_prices_close_to_binomial_oracle() {
        // Monthly-exercise put, fitted on one set and priced on an
        // independent set; the tree is the acceptance oracle.
        let rate = 0.05;
        let grid = TimeGrid::new(12, 1.0 / 12.0);
        let fit_paths =
            simulate_paths(&gbm(0.2, rate, 100.0), &grid, 10_000, &RngStream::new(5, 0)).unwrap();
        let model = lsmc_fit(
            &fit_paths,
            OptionKind::AmericanPut,
            &[90.0, 95.0, 100.0, 105.0, 110.0],
            1.0,
            rate,
            &small_config(10_000),
        )
        .unwrap();
        let eval_paths =
            simulate_paths(&gbm(0.2, rate, 100.0), &grid, 100_000, &RngStream::new(6, 0)).unwrap();
        let (price, se) = lsmc_price(&model, &eval_paths, 100.0);
        let oracle = binomial_american(OptionKind::AmericanPut, 100.0, 100.0, 0.2, rate, 1.0, 2000);
        assert!(
            price <= oracle + 3.0 * se,
            "suboptimal stopping bound violated: {price} vs {oracle} (se {se})"
        );
        assert!(
            (price - oracle).abs() / oracle < 0.02,
            "lsmc {price} too far from oracle {oracle}"
        );
    }
}
