//! Contract terms and pathwise lifecycle logic for the autocallable coupon
//! note and for vanilla/digital options.
//!
//! The note pays a monthly coupon whenever the index return since issue clears
//! the coupon barrier, redeems early on semi-annual observation dates when the
//! return clears the call barrier, and repays principal at maturity subject to
//! the contingent protection barrier. All barrier comparisons are inclusive
//! (`>=`), and a coupon due on a redemption date is paid alongside the
//! redemption.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("invalid contract terms: {0}")]
    InvalidTerms(String),
    #[error("path has {got} monthly nodes but the schedule needs {need}")]
    PathTooShort { got: usize, need: usize },
}

/// Autocallable coupon note terms. Frequencies are in months; barriers are
/// return thresholds relative to `initial_price`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutocallableSpec {
    pub initial_price: f64,
    /// Term in years.
    pub term: f64,
    pub coupon_frequency_months: u32,
    /// Coupon per observation as a fraction of notional.
    pub coupon_rate: f64,
    pub coupon_barrier: f64,
    pub autocall_frequency_months: u32,
    pub call_barrier: f64,
    pub protection_barrier: f64,
    pub notional: f64,
}

impl Default for AutocallableSpec {
    fn default() -> Self {
        Self {
            initial_price: 100.0,
            term: 7.0,
            coupon_frequency_months: 1,
            coupon_rate: 0.0095,
            coupon_barrier: -0.35,
            autocall_frequency_months: 6,
            call_barrier: 0.0,
            protection_barrier: -0.35,
            notional: 100.0,
        }
    }
}

impl AutocallableSpec {
    pub fn term_months(&self) -> u32 {
        (self.term * 12.0).round() as u32
    }

    pub fn validate(&self) -> Result<(), ContractError> {
        if !(self.term > 0.0) {
            return Err(ContractError::InvalidTerms("note.term must be > 0".into()));
        }
        if self.coupon_frequency_months == 0 || self.autocall_frequency_months == 0 {
            return Err(ContractError::InvalidTerms(
                "note frequencies must be >= 1 month".into(),
            ));
        }
        if self.autocall_frequency_months % self.coupon_frequency_months != 0 {
            return Err(ContractError::InvalidTerms(
                "note.coupon_frequency must divide note.autocall_frequency".into(),
            ));
        }
        if self.term_months() % self.autocall_frequency_months != 0 {
            return Err(ContractError::InvalidTerms(
                "note.term must be a whole number of autocall periods".into(),
            ));
        }
        if self.protection_barrier > 0.0 {
            return Err(ContractError::InvalidTerms(
                "note.protection_barrier must be <= 0".into(),
            ));
        }
        if self.coupon_barrier > self.call_barrier {
            return Err(ContractError::InvalidTerms(
                "note.coupon_barrier must be <= note.call_barrier".into(),
            ));
        }
        if !(self.initial_price > 0.0) || !(self.notional > 0.0) {
            return Err(ContractError::InvalidTerms(
                "note.initial_price and note.notional must be > 0".into(),
            ));
        }
        if self.coupon_rate < 0.0 {
            return Err(ContractError::InvalidTerms(
                "note.coupon_rate must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    EuropeanCall,
    EuropeanPut,
    DigitalCashCall,
    DigitalCashPut,
    AmericanCall,
    AmericanPut,
}

impl OptionKind {
    pub fn is_call(&self) -> bool {
        matches!(
            self,
            OptionKind::EuropeanCall | OptionKind::DigitalCashCall | OptionKind::AmericanCall
        )
    }

    pub fn is_digital(&self) -> bool {
        matches!(self, OptionKind::DigitalCashCall | OptionKind::DigitalCashPut)
    }

    pub fn is_american(&self) -> bool {
        matches!(self, OptionKind::AmericanCall | OptionKind::AmericanPut)
    }
}

/// Vanilla or digital option terms. `maturity` is absolute episode time in
/// years; `quantity` is the signed position size (positive = long).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
    pub cash_amount: f64,
    pub quantity: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Self {
        Self {
            kind,
            strike,
            maturity,
            cash_amount: 1.0,
            quantity: 1.0,
        }
    }
}

/// Undiscounted payoff of one unit at `spot`. The position sign/quantity is
/// applied by the caller. Digital comparisons at the strike are inclusive.
pub fn vanilla_payoff(spec: &OptionSpec, spot: f64) -> f64 {
    match spec.kind {
        OptionKind::EuropeanCall | OptionKind::AmericanCall => (spot - spec.strike).max(0.0),
        OptionKind::EuropeanPut | OptionKind::AmericanPut => (spec.strike - spot).max(0.0),
        OptionKind::DigitalCashCall => {
            if spot >= spec.strike {
                spec.cash_amount
            } else {
                0.0
            }
        }
        OptionKind::DigitalCashPut => {
            if spot <= spec.strike {
                spec.cash_amount
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CashFlow {
    pub time: f64,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Autocall,
    Maturity,
}

/// Realized cash flows of the note along one path.
#[derive(Debug, Clone)]
pub struct NoteLifecycle {
    pub flows: Vec<CashFlow>,
    pub termination_time: f64,
    pub terminated_by: Termination,
}

impl NoteLifecycle {
    pub fn total(&self) -> f64 {
        self.flows.iter().map(|f| f.amount).sum()
    }
}

/// Coupon and autocall observation dates, in months since issue.
pub fn observation_schedule(spec: &AutocallableSpec) -> (Vec<u32>, Vec<u32>) {
    let term = spec.term_months();
    let coupons = (1..=term / spec.coupon_frequency_months)
        .map(|k| k * spec.coupon_frequency_months)
        .collect();
    let autocalls = (1..=term / spec.autocall_frequency_months)
        .map(|k| k * spec.autocall_frequency_months)
        .collect();
    (coupons, autocalls)
}

/// Observation months still ahead of `t_now` (strictly later), in ascending
/// order. Used to build pricing grids for a note alive at `t_now`.
pub fn remaining_observation_months(spec: &AutocallableSpec, t_now: f64) -> Vec<u32> {
    let term = spec.term_months();
    (1..=term)
        .filter(|&m| m % spec.coupon_frequency_months == 0)
        .filter(|&m| m as f64 / 12.0 > t_now + 1e-9)
        .collect()
}

/// Outcome of observing the note at one month: coupon paid, redemption paid,
/// and whether the note terminates at this observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationOutcome {
    pub coupon: f64,
    pub redemption: f64,
    pub terminated: Option<Termination>,
}

/// Barrier rules applied at a single observation month for a note still
/// alive just before it.
pub fn observation_outcome(spec: &AutocallableSpec, month: u32, spot: f64) -> ObservationOutcome {
    let term = spec.term_months();
    let ret = spot / spec.initial_price - 1.0;
    let mut out = ObservationOutcome {
        coupon: 0.0,
        redemption: 0.0,
        terminated: None,
    };
    if month % spec.coupon_frequency_months == 0 && ret >= spec.coupon_barrier {
        out.coupon = spec.coupon_rate * spec.notional;
    }
    if month % spec.autocall_frequency_months == 0 && ret >= spec.call_barrier {
        out.redemption = spec.notional;
        out.terminated = Some(Termination::Autocall);
        return out;
    }
    if month == term {
        out.redemption = if ret >= spec.protection_barrier {
            spec.notional
        } else {
            spec.notional * (1.0 + ret)
        };
        out.terminated = Some(Termination::Maturity);
    }
    out
}

/// Core barrier walk shared by the lifecycle builder and the Monte Carlo
/// pricer. `spots[i]` is the spot observed at month `months[i]`; `visit` is
/// called with `(time, amount)` for every cash flow in time order. Returns
/// the termination time and cause.
///
/// The caller must pass every observation month from its starting point to
/// the term in ascending order; the walk stops early on an autocall.
pub fn walk_note_flows(
    spec: &AutocallableSpec,
    months: &[u32],
    spots: &[f64],
    visit: &mut dyn FnMut(f64, f64),
) -> (f64, Termination) {
    debug_assert_eq!(months.len(), spots.len());
    for (&m, &spot) in months.iter().zip(spots) {
        let t = m as f64 / 12.0;
        let out = observation_outcome(spec, m, spot);
        if out.coupon != 0.0 {
            visit(t, out.coupon);
        }
        if out.redemption != 0.0 {
            visit(t, out.redemption);
        }
        if let Some(cause) = out.terminated {
            return (t, cause);
        }
    }
    (spec.term, Termination::Maturity)
}

/// Walk the note along a monthly spot path (`path[m]` = spot at month `m`,
/// starting at issue) and emit its cash flows. The path must cover every
/// observation date.
pub fn note_lifecycle(spec: &AutocallableSpec, path: &[f64]) -> Result<NoteLifecycle, ContractError> {
    let term = spec.term_months() as usize;
    if path.len() < term + 1 {
        return Err(ContractError::PathTooShort {
            got: path.len(),
            need: term + 1,
        });
    }

    let months: Vec<u32> = (1..=term as u32).collect();
    let spots = &path[1..=term];
    let mut flows = Vec::new();
    let (termination_time, terminated_by) =
        walk_note_flows(spec, &months, spots, &mut |time, amount| {
            flows.push(CashFlow { time, amount })
        });
    Ok(NoteLifecycle {
        flows,
        termination_time,
        terminated_by,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_counts_match_contract_terms() {
        let spec = AutocallableSpec::default();
        let (coupons, autocalls) = observation_schedule(&spec);
        assert_eq!(coupons.len(), 84);
        assert_eq!(autocalls.len(), 14);
        assert_eq!(*coupons.first().unwrap(), 1);
        assert_eq!(*coupons.last().unwrap(), 84);
        assert_eq!(autocalls, vec![6, 12, 18, 24, 30, 36, 42, 48, 54, 60, 66, 72, 78, 84]);
    }

    #[test]
    fn short_term_schedule() {
        let spec = AutocallableSpec {
            term: 0.5,
            ..AutocallableSpec::default()
        };
        let (coupons, autocalls) = observation_schedule(&spec);
        assert_eq!(coupons.len(), 6);
        assert_eq!(autocalls, vec![6]);
    }

    #[test]
    fn degenerate_frequencies_coincide() {
        let spec = AutocallableSpec {
            coupon_frequency_months: 6,
            ..AutocallableSpec::default()
        };
        let (coupons, autocalls) = observation_schedule(&spec);
        assert_eq!(coupons, autocalls);
    }

    #[test]
    fn flat_at_par_autocalls_at_first_observation() {
        let spec = AutocallableSpec::default();
        let path = vec![100.0; 85];
        let lc = note_lifecycle(&spec, &path).unwrap();
        assert_eq!(lc.terminated_by, Termination::Autocall);
        assert!((lc.termination_time - 0.5).abs() < 1e-12);
        // Six monthly coupons of 0.95 plus redemption of 100.
        assert_eq!(lc.flows.len(), 7);
        for f in &lc.flows[..6] {
            assert!((f.amount - 0.95).abs() < 1e-12);
        }
        assert_eq!(lc.flows[6].amount, 100.0);
        assert!((lc.total() - 105.70).abs() < 1e-9);
    }

    #[test]
    fn deep_loss_path_pays_proportional_principal_only() {
        let spec = AutocallableSpec::default();
        let path = vec![60.0; 85];
        let lc = note_lifecycle(&spec, &path).unwrap();
        assert_eq!(lc.terminated_by, Termination::Maturity);
        assert_eq!(lc.flows.len(), 1);
        assert!((lc.flows[0].amount - 60.0).abs() < 1e-9);
        assert!((lc.flows[0].time - 7.0).abs() < 1e-12);
    }

    #[test]
    fn coupon_zone_path_pays_all_coupons_and_principal() {
        let spec = AutocallableSpec::default();
        let path = vec![70.0; 85];
        let lc = note_lifecycle(&spec, &path).unwrap();
        assert_eq!(lc.terminated_by, Termination::Maturity);
        assert_eq!(lc.flows.len(), 85); // 84 coupons + principal
        assert!((lc.total() - (84.0 * 0.95 + 100.0)).abs() < 1e-9);
    }

    #[test]
    fn lifecycle_rejects_short_path() {
        let spec = AutocallableSpec::default();
        let path = vec![100.0; 12];
        assert!(matches!(
            note_lifecycle(&spec, &path),
            Err(ContractError::PathTooShort { .. })
        ));
    }

    #[test]
    fn no_lookahead_beyond_termination() {
        let spec = AutocallableSpec::default();
        let mut a = vec![100.0; 85];
        let mut b = vec![100.0; 85];
        // Diverge only after the month-6 autocall.
        for m in 7..85 {
            a[m] = 150.0;
            b[m] = 50.0;
        }
        let la = note_lifecycle(&spec, &a).unwrap();
        let lb = note_lifecycle(&spec, &b).unwrap();
        assert_eq!(la.flows.len(), lb.flows.len());
        for (fa, fb) in la.flows.iter().zip(&lb.flows) {
            assert_eq!(fa.amount, fb.amount);
            assert_eq!(fa.time, fb.time);
        }
    }

    #[test]
    fn payoffs() {
        let put = OptionSpec::new(OptionKind::AmericanPut, 100.0, 1.0);
        assert_eq!(vanilla_payoff(&put, 90.0), 10.0);
        let dig = OptionSpec::new(OptionKind::DigitalCashCall, 100.0, 1.0);
        assert_eq!(vanilla_payoff(&dig, 100.0), 1.0); // inclusive at the strike
        assert_eq!(vanilla_payoff(&dig, 99.999), 0.0);
        let call = OptionSpec::new(OptionKind::EuropeanCall, 100.0, 1.0);
        assert_eq!(vanilla_payoff(&call, 80.0), 0.0);
    }

    #[test]
    fn invalid_terms_rejected() {
        let mut spec = AutocallableSpec::default();
        spec.coupon_frequency_months = 4; // does not divide 6
        assert!(spec.validate().is_err());
        spec = AutocallableSpec::default();
        spec.protection_barrier = 0.1;
        assert!(spec.validate().is_err());
        spec = AutocallableSpec::default();
        spec.coupon_barrier = 0.5;
        assert!(spec.validate().is_err());
    }
}
