//! The hedging MDP.
//!
//! A trader's book is rebalanced on a fixed grid. Each step maps the agent's
//! action in `[0, 1]` to a hedge-option trade (the fraction of maximum
//! hedging), charges the option transaction cost, evolves the market, settles
//! expiries / coupons / autocalls / early exercises, and revalues the book.
//! The reward is
//!
//! ```text
//! R = -kappa * |V * H| + (P_after_evolution - P_after_rebalance)
//! ```
//!
//! Trades are booked at mid, so the explicit cost term is the only place the
//! fee enters and the reward sum telescopes to terminal-minus-initial book
//! value when `kappa = 0`.
//!
//! Two modes share the machinery: `Autocallable` seeds the book with one
//! short note and rebalances monthly (daily market sub-steps); `VanillaFlow`
//! starts empty and receives Poisson client flow of one-month at-the-money
//! American options on a daily grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::{
    observation_outcome, vanilla_payoff, AutocallableSpec, OptionKind, OptionSpec,
};
use crate::market::{step_state, MarketError, RngStream, SabrParams, TimeGrid};
use crate::pricing::{
    binomial_american_greeks, bs_digital, bs_european, lsmc_exercise_decision, lsmc_fit,
    price_autocallable_mc, ContinuationModel, PricerConfig, PricingError, Valuation,
};

const MARKET_SUBSTREAM: u64 = 1;
const VALUATION_SUBSTREAM: u64 = 2;
const ARRIVAL_SUBSTREAM: u64 = 3;
const SETUP_SUBSTREAM: u64 = 100;
const LSMC_FIT_SUBSTREAM: u64 = 101;

const TRADING_DAYS: f64 = 252.0;
const MIN_UNIT_GAMMA: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    VanillaFlow,
    Autocallable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeInstrument {
    /// Cash-or-nothing call struck at the note's initial price (the call
    /// barrier level), expiring on the next autocall date.
    Digital,
    /// At-the-money one-month American call or put, the side chosen to
    /// offset the gamma being hedged.
    AmericanPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub mode: EnvMode,
    /// Rebalancing interval in years.
    pub dt: f64,
    /// Transaction-cost fraction on hedge-option trades.
    pub kappa: f64,
    pub hedge_instrument: HedgeInstrument,
    /// Action 1 targets this multiple of the client gamma magnitude.
    pub max_hedge_multiplier: f64,
    /// Annual rate for cash accrual (and the pricing rate mirror).
    pub rate: f64,
    /// Poisson intensity of client arrivals per step (vanilla mode).
    pub arrival_lambda: f64,
    /// Episode horizon in years.
    pub horizon: f64,
    /// Zero the residual book delta with an underlying leg at every
    /// rebalance. Disabled for the fully unhedged arm.
    pub auto_delta_hedge: bool,
    /// Test American positions for early exercise each step.
    pub early_exercise: bool,
    /// Cost fraction on the underlying delta leg (free by default).
    pub underlying_cost_kappa: f64,
}

impl EnvConfig {
    pub fn for_mode(mode: EnvMode) -> Self {
        match mode {
            EnvMode::Autocallable => Self {
                mode,
                dt: 1.0 / 12.0,
                kappa: 0.02,
                hedge_instrument: HedgeInstrument::Digital,
                max_hedge_multiplier: 5.0,
                rate: 0.0,
                arrival_lambda: 0.0,
                horizon: 7.0,
                auto_delta_hedge: true,
                early_exercise: true,
                underlying_cost_kappa: 0.0,
            },
            EnvMode::VanillaFlow => Self {
                mode,
                dt: 1.0 / TRADING_DAYS,
                kappa: 0.02,
                hedge_instrument: HedgeInstrument::AmericanPair,
                max_hedge_multiplier: 1.0,
                rate: 0.0,
                arrival_lambda: 1.0,
                horizon: 1.0 / 12.0,
                auto_delta_hedge: true,
                early_exercise: true,
                underlying_cost_kappa: 0.0,
            },
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.kappa < 0.0 || self.underlying_cost_kappa < 0.0 {
            return Err(EnvError::InvalidConfig(format!(
                "env.kappa must be >= 0, got {}",
                self.kappa.min(self.underlying_cost_kappa)
            )));
        }
        if !(self.dt > 0.0) {
            return Err(EnvError::InvalidConfig("env.dt must be > 0".into()));
        }
        let n = self.horizon / self.dt;
        if (n - n.round()).abs() > 1e-6 || n.round() < 1.0 {
            return Err(EnvError::InvalidConfig(
                "env.horizon must be a whole number of steps".into(),
            ));
        }
        if self.max_hedge_multiplier < 0.0 {
            return Err(EnvError::InvalidConfig(
                "env.max_hedge_multiplier must be >= 0".into(),
            ));
        }
        if self.arrival_lambda < 0.0 {
            return Err(EnvError::InvalidConfig(
                "env.arrival_lambda must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Feature vector the agent observes: normalized spot return, normalized
/// portfolio gamma, normalized time to the next call date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub features: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: f64,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

/// The option leg and underlying leg executed in one rebalance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeTrade {
    pub instrument: OptionSpec,
    pub units: f64,
    pub unit_value: f64,
    pub underlying_units: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    pub action_clipped: bool,
    /// Instrument unit gamma was below threshold, no option trade was made.
    pub degenerate_unit_gamma: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub spot: f64,
    pub action: f64,
    pub units: f64,
    pub reward: f64,
    pub portfolio_value: f64,
    pub gamma_client: f64,
    pub gamma_hedge: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub step_index: usize,
    pub t: f64,
    pub spot: f64,
    pub vol: f64,
    pub cash: f64,
    pub underlying_units: f64,
    pub client_positions: Vec<OptionSpec>,
    pub hedge_positions: Vec<OptionSpec>,
    pub note_alive: bool,
    pub done: bool,
    pub tau_next_call: f64,
    /// Book value at the current time (before any rebalance at this time).
    pub book_value: f64,
    pub client_delta: f64,
    pub client_gamma: f64,
    pub hedge_delta: f64,
    pub hedge_gamma: f64,
}

impl EnvState {
    pub fn portfolio_gamma(&self) -> f64 {
        self.client_gamma + self.hedge_gamma
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExerciseModels {
    pub call: ContinuationModel,
    pub put: ContinuationModel,
}

/// Fit the one-month American continuation models used for in-episode early
/// exercise: daily exercise grid, pricing-measure paths, a band of strikes
/// pooled through the moneyness feature.
pub fn fit_exercise_models(
    market: &SabrParams,
    pricer: &PricerConfig,
    setup_stream: &RngStream,
) -> Result<ExerciseModels, EnvError> {
    let grid = TimeGrid::new(21, 1.0 / TRADING_DAYS);
    let fit_params = SabrParams {
        mu: pricer.rate,
        ..*market
    };
    let paths = crate::market::simulate_paths(
        &fit_params,
        &grid,
        pricer.lsmc_training_paths,
        &setup_stream.substream(LSMC_FIT_SUBSTREAM),
    )?;
    let strikes: Vec<f64> = [0.9, 0.95, 1.0, 1.05, 1.1]
        .iter()
        .map(|k| k * market.spot0)
        .collect();
    let maturity = 1.0 / 12.0;
    let call = lsmc_fit(
        &paths,
        OptionKind::AmericanCall,
        &strikes,
        maturity,
        pricer.rate,
        pricer,
    )?;
    let put = lsmc_fit(
        &paths,
        OptionKind::AmericanPut,
        &strikes,
        maturity,
        pricer.rate,
        pricer,
    )?;
    Ok(ExerciseModels { call, put })
}

#[derive(Debug, Clone, Copy)]
pub struct Normalization {
    pub gamma_scale: f64,
    pub tau_scale: f64,
}

/// Immutable experiment-level setup shared by all episodes: contracts,
/// market parameters, fitted exercise models and observation normalization.
#[derive(Debug, Clone)]
pub struct EnvSetup {
    pub market: SabrParams,
    pub note: AutocallableSpec,
    pub config: EnvConfig,
    pub pricer: PricerConfig,
    pub book_binomial_steps: usize,
    pub exercise_models: Option<Arc<ExerciseModels>>,
    pub norm: Normalization,
}

impl EnvSetup {
    /// Build the shared setup. `setup_stream` seeds the deterministic
    /// one-off computations (normalization pricing, LSMC fitting paths).
    pub fn new(
        market: SabrParams,
        note: AutocallableSpec,
        config: EnvConfig,
        pricer: PricerConfig,
        setup_stream: RngStream,
    ) -> Result<Self, EnvError> {
        market.validate()?;
        note.validate()
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        pricer.validate()?;

        let book_binomial_steps = 64;

        // One-month American exercise models on a daily grid; only needed
        // when American positions can face in-episode decision dates.
        let needs_models = matches!(config.mode, EnvMode::VanillaFlow)
            || matches!(config.hedge_instrument, HedgeInstrument::AmericanPair);
        let exercise_models = if needs_models {
            Some(Arc::new(fit_exercise_models(&market, &pricer, &setup_stream)?))
        } else {
            None
        };

        let gamma_scale = match config.mode {
            EnvMode::Autocallable => {
                let v = price_autocallable_mc(
                    &note,
                    market.spot0,
                    market.sigma0,
                    0.0,
                    &market,
                    &pricer,
                    &setup_stream.substream(SETUP_SUBSTREAM),
                );
                v.gamma.abs().max(1e-6)
            }
            EnvMode::VanillaFlow => {
                let v = binomial_american_greeks(
                    OptionKind::AmericanCall,
                    market.spot0,
                    market.spot0,
                    market.sigma0.max(1e-4),
                    pricer.rate,
                    1.0 / 12.0,
                    book_binomial_steps,
                );
                v.gamma.abs().max(1e-6)
            }
        };
        let tau_scale = match config.mode {
            EnvMode::Autocallable => note.autocall_frequency_months as f64 / 12.0,
            EnvMode::VanillaFlow => config.dt,
        };

        Ok(Self {
            market,
            note,
            config,
            pricer,
            book_binomial_steps,
            exercise_models,
            norm: Normalization {
                gamma_scale,
                tau_scale,
            },
        })
    }

    pub fn make_env(self: &Arc<Self>) -> HedgeEnv {
        HedgeEnv::new(Arc::clone(self))
    }
}

pub struct HedgeEnv {
    setup: Arc<EnvSetup>,
    state: EnvState,
    episode_stream: RngStream,
    trace: Vec<TraceRow>,
    last_info: StepInfo,
    last_trade: Option<HedgeTrade>,
}

impl HedgeEnv {
    pub fn new(setup: Arc<EnvSetup>) -> Self {
        let market = setup.market;
        Self {
            setup,
            state: EnvState {
                step_index: 0,
                t: 0.0,
                spot: market.spot0,
                vol: market.sigma0,
                cash: 0.0,
                underlying_units: 0.0,
                client_positions: Vec::new(),
                hedge_positions: Vec::new(),
                note_alive: false,
                done: true,
                tau_next_call: 0.0,
                book_value: 0.0,
                client_delta: 0.0,
                client_gamma: 0.0,
                hedge_delta: 0.0,
                hedge_gamma: 0.0,
            },
            episode_stream: RngStream::new(0, 0),
            trace: Vec::new(),
            last_info: StepInfo::default(),
            last_trade: None,
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn setup(&self) -> &EnvSetup {
        &self.setup
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn last_info(&self) -> StepInfo {
        self.last_info
    }

    pub fn last_trade(&self) -> Option<&HedgeTrade> {
        self.last_trade.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn obs_dim(&self) -> usize {
        3
    }

    fn local_vol(&self) -> f64 {
        self.state.vol * self.state.spot.powf(self.setup.market.beta - 1.0)
    }

    /// Mark one unit of an option at the current state. American options use
    /// the tree with node greeks, digitals and Europeans the closed forms,
    /// all with the current lognormal-equivalent volatility.
    fn value_option(&self, spec: &OptionSpec) -> Valuation {
        let ttm = (spec.maturity - self.state.t).max(0.0);
        let vol = self.local_vol();
        let rate = self.setup.pricer.rate;
        let spot = self.state.spot;
        match spec.kind {
            OptionKind::EuropeanCall | OptionKind::EuropeanPut => {
                bs_european(spec.kind, spot, spec.strike, vol, rate, ttm)
            }
            OptionKind::DigitalCashCall | OptionKind::DigitalCashPut => {
                bs_digital(spec.kind, spot, spec.strike, vol, rate, ttm, spec.cash_amount)
            }
            OptionKind::AmericanCall | OptionKind::AmericanPut => {
                if ttm == 0.0 {
                    Valuation::deterministic(vanilla_payoff(spec, spot), 0.0, 0.0)
                } else {
                    binomial_american_greeks(
                        spec.kind,
                        spot,
                        spec.strike,
                        vol.max(1e-12),
                        rate,
                        ttm,
                        self.setup.book_binomial_steps,
                    )
                }
            }
        }
    }

    fn note_valuation(&self, stream: &RngStream) -> Valuation {
        price_autocallable_mc(
            &self.setup.note,
            self.state.spot,
            self.state.vol,
            self.state.t,
            &self.setup.market,
            &self.setup.pricer,
            stream,
        )
    }

    /// Recompute book value and greeks at the current state. `step_key`
    /// derives the valuation stream, so every (episode, step) revaluation is
    /// deterministic no matter how often it is invoked.
    fn revalue(&mut self, step_key: u64) {
        let val_stream = self
            .episode_stream
            .substream(VALUATION_SUBSTREAM)
            .substream(step_key);

        let mut client_value = 0.0;
        let mut client_delta = 0.0;
        let mut client_gamma = 0.0;
        if matches!(self.setup.config.mode, EnvMode::Autocallable) && self.state.note_alive {
            let v = self.note_valuation(&val_stream);
            client_value -= v.price;
            client_delta -= v.delta;
            client_gamma -= v.gamma;
        }
        for spec in &self.state.client_positions {
            let v = self.value_option(spec);
            client_value += spec.quantity * v.price;
            client_delta += spec.quantity * v.delta;
            client_gamma += spec.quantity * v.gamma;
        }

        let mut hedge_value = 0.0;
        let mut hedge_delta = 0.0;
        let mut hedge_gamma = 0.0;
        for spec in &self.state.hedge_positions {
            let v = self.value_option(spec);
            hedge_value += spec.quantity * v.price;
            hedge_delta += spec.quantity * v.delta;
            hedge_gamma += spec.quantity * v.gamma;
        }

        self.state.client_delta = client_delta;
        self.state.client_gamma = client_gamma;
        self.state.hedge_delta = hedge_delta;
        self.state.hedge_gamma = hedge_gamma;
        self.state.book_value = self.state.cash
            + self.state.underlying_units * self.state.spot
            + client_value
            + hedge_value;
    }

    fn update_tau(&mut self) {
        match self.setup.config.mode {
            EnvMode::Autocallable => {
                let freq = self.setup.note.autocall_frequency_months;
                let term = self.setup.note.term_months();
                let mut m = freq;
                while m <= term && (m as f64 / 12.0) <= self.state.t + 1e-9 {
                    m += freq;
                }
                let m = m.min(term);
                self.state.tau_next_call = (m as f64 / 12.0 - self.state.t).max(0.0);
            }
            EnvMode::VanillaFlow => {
                self.state.tau_next_call = self.setup.config.dt;
            }
        }
    }

    pub fn observation(&self) -> Observation {
        let s = &self.state;
        Observation {
            features: [
                s.spot / self.setup.market.spot0 - 1.0,
                s.portfolio_gamma() / self.setup.norm.gamma_scale,
                s.tau_next_call / self.setup.norm.tau_scale,
            ],
        }
    }

    /// Start a fresh episode driven by `episode_stream`. The autocallable
    /// mode books one short note at par; the vanilla mode starts empty.
    pub fn reset(&mut self, episode_stream: RngStream) -> Observation {
        self.episode_stream = episode_stream;
        self.trace.clear();
        self.last_info = StepInfo::default();
        self.last_trade = None;
        self.state = EnvState {
            step_index: 0,
            t: 0.0,
            spot: self.setup.market.spot0,
            vol: self.setup.market.sigma0,
            cash: 0.0,
            underlying_units: 0.0,
            client_positions: Vec::new(),
            hedge_positions: Vec::new(),
            note_alive: matches!(self.setup.config.mode, EnvMode::Autocallable),
            done: false,
            tau_next_call: 0.0,
            book_value: 0.0,
            client_delta: 0.0,
            client_gamma: 0.0,
            hedge_delta: 0.0,
            hedge_gamma: 0.0,
        };
        self.update_tau();
        self.revalue(0);
        self.observation()
    }

    /// Map the clipped action to the rebalance trade. The action targets a
    /// total hedge-book gamma of `action * multiplier * |client gamma|`
    /// (signed to offset the client book); the fresh trade covers the gap to
    /// that target, then the underlying leg zeroes the residual delta.
    fn build_trade(&mut self, action: f64) -> HedgeTrade {
        let s = &self.state;
        let config = &self.setup.config;
        let target_hedge_gamma = -action * config.max_hedge_multiplier * s.client_gamma;
        let gamma_gap = target_hedge_gamma - s.hedge_gamma;

        let instrument = match config.hedge_instrument {
            HedgeInstrument::Digital => OptionSpec {
                kind: OptionKind::DigitalCashCall,
                strike: self.setup.note.initial_price,
                maturity: s.t + s.tau_next_call,
                cash_amount: 1.0,
                quantity: 0.0,
            },
            HedgeInstrument::AmericanPair => OptionSpec {
                kind: if gamma_gap >= 0.0 {
                    OptionKind::AmericanCall
                } else {
                    OptionKind::AmericanPut
                },
                strike: s.spot,
                maturity: s.t + 1.0 / 12.0,
                cash_amount: 1.0,
                quantity: 0.0,
            },
        };

        let unit = self.value_option(&instrument);
        let units = if unit.gamma.abs() < MIN_UNIT_GAMMA {
            self.last_info.degenerate_unit_gamma = true;
            0.0
        } else {
            gamma_gap / unit.gamma
        };

        if units != 0.0 {
            let mut pos = instrument;
            pos.quantity = units;
            self.state.hedge_positions.push(pos);
            self.state.cash -= units * unit.price;
            self.state.hedge_delta += units * unit.delta;
            self.state.hedge_gamma += units * unit.gamma;
        }

        let mut underlying_units = 0.0;
        if self.setup.config.auto_delta_hedge {
            let s = &self.state;
            let total_delta = s.client_delta + s.hedge_delta + s.underlying_units;
            underlying_units = -total_delta;
            self.state.underlying_units += underlying_units;
            self.state.cash -= underlying_units * self.state.spot;
        }

        HedgeTrade {
            instrument,
            units,
            unit_value: unit.price,
            underlying_units,
        }
    }

    pub fn step(&mut self, action: f64) -> Result<Transition, EnvError> {
        if self.state.done {
            return Err(EnvError::EpisodeDone);
        }
        self.last_info = StepInfo::default();
        let obs0 = self.observation();
        let raw_action = action;
        let action = action.clamp(0.0, 1.0);
        if action != raw_action || !raw_action.is_finite() {
            self.last_info.action_clipped = true;
        }

        let config = self.setup.config;
        let step_index = self.state.step_index;
        let decision_time = self.state.t;
        let decision_spot = self.state.spot;

        // (1)-(2) rebalance at the current time; trades are booked at mid so
        // the stored book value carries over as P^+.
        let trade = self.build_trade(action);
        let p_plus = self.state.book_value;
        let option_cost = config.kappa * (trade.units * trade.unit_value).abs();
        let underlying_cost =
            config.underlying_cost_kappa * (trade.underlying_units * decision_spot).abs();
        let gamma_client_at_rebalance = self.state.client_gamma;
        let gamma_hedge_at_rebalance = self.state.hedge_gamma;
        self.last_trade = Some(trade);

        // (3) evolve the market over one rebalance interval in daily
        // sub-steps, accruing cash at the configured rate.
        let n_sub = ((config.dt * TRADING_DAYS).round() as usize).max(1);
        let sub_dt = config.dt / n_sub as f64;
        let mut sampler = self
            .episode_stream
            .substream(MARKET_SUBSTREAM)
            .substream(step_index as u64)
            .sampler();
        let (mut spot, mut vol) = (self.state.spot, self.state.vol);
        for _ in 0..n_sub {
            (spot, vol) = step_state(spot, vol, &self.setup.market, sub_dt, &mut sampler)?;
        }
        self.state.spot = spot;
        self.state.vol = vol;
        self.state.cash *= (config.rate * config.dt).exp();
        self.state.step_index += 1;
        self.state.t = self.state.step_index as f64 * config.dt;

        // (4) settle events at the new time.
        if matches!(config.mode, EnvMode::VanillaFlow) && config.arrival_lambda > 0.0 {
            self.client_arrivals(step_index as u64);
        }
        self.settle_expiries();
        if config.early_exercise {
            self.settle_early_exercise();
        }
        let mut terminated = false;
        if matches!(config.mode, EnvMode::Autocallable) && self.state.note_alive {
            terminated = self.settle_note_observation();
        }

        let horizon_reached = self.state.step_index >= config.n_steps();
        self.state.done = terminated || horizon_reached;
        self.update_tau();

        // (5) revalue and pay the reward.
        self.revalue(self.state.step_index as u64);
        let reward = -option_cost - underlying_cost + (self.state.book_value - p_plus);

        let next_obs = self.observation();
        self.trace.push(TraceRow {
            step: step_index,
            time: decision_time,
            spot: decision_spot,
            action,
            units: trade.units,
            reward,
            portfolio_value: p_plus,
            gamma_client: gamma_client_at_rebalance,
            gamma_hedge: gamma_hedge_at_rebalance,
            done: self.state.done,
        });

        Ok(Transition {
            obs: obs0,
            action,
            reward,
            next_obs,
            done: self.state.done,
        })
    }

    /// Poisson arrivals of one-month at-the-money American client options,
    /// call/put and long/short with equal probability, one unit each, traded
    /// at mid.
    fn client_arrivals(&mut self, step_key: u64) {
        let mut sampler = self
            .episode_stream
            .substream(ARRIVAL_SUBSTREAM)
            .substream(step_key)
            .sampler();
        let count = sampler.poisson(self.setup.config.arrival_lambda);
        for _ in 0..count {
            let kind = if sampler.uniform() < 0.5 {
                OptionKind::AmericanCall
            } else {
                OptionKind::AmericanPut
            };
            let quantity = if sampler.uniform() < 0.5 { 1.0 } else { -1.0 };
            let spec = OptionSpec {
                kind,
                strike: self.state.spot,
                maturity: self.state.t + 1.0 / 12.0,
                cash_amount: 1.0,
                quantity,
            };
            let value = self.value_option(&spec).price;
            self.state.cash -= quantity * value;
            self.state.client_positions.push(spec);
        }
    }

    fn settle_expiries(&mut self) {
        let t = self.state.t;
        let spot = self.state.spot;
        let settle = |positions: &mut Vec<OptionSpec>, cash: &mut f64| {
            positions.retain(|spec| {
                if spec.maturity <= t + 1e-9 {
                    *cash += spec.quantity * vanilla_payoff(spec, spot);
                    false
                } else {
                    true
                }
            });
        };
        settle(&mut self.state.client_positions, &mut self.state.cash);
        settle(&mut self.state.hedge_positions, &mut self.state.cash);
    }

    /// Test every live American position against the fitted continuation
    /// model; exercised options convert to intrinsic cash with the position
    /// sign and leave the book.
    fn settle_early_exercise(&mut self) {
        let Some(models) = self.setup.exercise_models.clone() else {
            return;
        };
        let t = self.state.t;
        let spot = self.state.spot;
        let exercise = |positions: &mut Vec<OptionSpec>, cash: &mut f64| {
            positions.retain(|spec| {
                if !spec.kind.is_american() || spec.maturity <= t + 1e-9 {
                    return true;
                }
                let model = if spec.kind.is_call() {
                    &models.call
                } else {
                    &models.put
                };
                // Map episode time onto the model clock via time to maturity.
                let model_t = model.maturity - (spec.maturity - t);
                if model_t < -1e-9 {
                    return true;
                }
                if lsmc_exercise_decision(model, spot, model_t.max(0.0), spec.kind, spec.strike) {
                    *cash += spec.quantity * vanilla_payoff(spec, spot);
                    false
                } else {
                    true
                }
            });
        };
        exercise(&mut self.state.client_positions, &mut self.state.cash);
        exercise(&mut self.state.hedge_positions, &mut self.state.cash);
    }

    /// Apply the note's barrier rules if the current time is an observation
    /// date. Returns true when the note terminated.
    fn settle_note_observation(&mut self) -> bool {
        let spec = self.setup.note;
        let t = self.state.t;
        let month = (t * 12.0).round() as u32;
        if month == 0 || (month as f64 / 12.0 - t).abs() > 1e-9 {
            return false;
        }
        if month % spec.coupon_frequency_months != 0 && month != spec.term_months() {
            return false;
        }
        let out = observation_outcome(&spec, month, self.state.spot);
        // Short the note: coupons and redemptions are paid out.
        self.state.cash -= out.coupon;
        self.state.cash -= out.redemption;
        if out.terminated.is_some() {
            self.state.note_alive = false;
            return true;
        }
        false
    }
}
