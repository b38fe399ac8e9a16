//! Python bindings: the market simulator, contract lifecycle, pricers, the
//! hedging environment, risk metrics and the full experiment CLI, importable
//! as the `hedgelab` module.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hedgelab::config::ExperimentConfig;
use hedgelab::drl::PolicySnapshot;
use hedgelab::env::{EnvSetup, HedgeEnv};
use hedgelab::instruments::{self, AutocallableSpec, OptionKind, OptionSpec};
use hedgelab::market::{self, RngStream, SabrParams, TimeGrid};
use hedgelab::pricing::{self, PricerConfig, Valuation};
use hedgelab::risk;
use hedgelab::strategies::Strategy;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<OptionKind> {
    match kind {
        "european_call" => Ok(OptionKind::EuropeanCall),
        "european_put" => Ok(OptionKind::EuropeanPut),
        "digital_cash_call" => Ok(OptionKind::DigitalCashCall),
        "digital_cash_put" => Ok(OptionKind::DigitalCashPut),
        "american_call" => Ok(OptionKind::AmericanCall),
        "american_put" => Ok(OptionKind::AmericanPut),
        other => Err(value_err(format!("unknown option kind '{other}'"))),
    }
}

fn valuation_dict<'py>(py: Python<'py>, v: &Valuation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("price", v.price)?;
    d.set_item("delta", v.delta)?;
    d.set_item("gamma", v.gamma)?;
    d.set_item("std_error", v.std_error)?;
    Ok(d)
}

/// SABR market parameters.
#[pyclass(name = "SabrParams", skip_from_py_object)]
#[derive(Clone)]
struct PySabrParams {
    inner: SabrParams,
}

#[pymethods]
impl PySabrParams {
    #[new]
    #[pyo3(signature = (spot0=100.0, mu=0.0, sigma0=0.2, beta=1.0, rho=-0.4, nu=0.3))]
    fn new(spot0: f64, mu: f64, sigma0: f64, beta: f64, rho: f64, nu: f64) -> PyResult<Self> {
        let inner = SabrParams {
            spot0,
            mu,
            sigma0,
            beta,
            rho,
            nu,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn spot0(&self) -> f64 {
        self.inner.spot0
    }

    #[getter]
    fn sigma0(&self) -> f64 {
        self.inner.sigma0
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Autocallable note terms (defaults follow the studied note structure).
#[pyclass(name = "AutocallableSpec", skip_from_py_object)]
#[derive(Clone)]
struct PyAutocallableSpec {
    inner: AutocallableSpec,
}

#[pymethods]
impl PyAutocallableSpec {
    #[new]
    #[pyo3(signature = (initial_price=100.0, term=7.0, coupon_frequency_months=1,
                        coupon_rate=0.0095, coupon_barrier=-0.35, autocall_frequency_months=6,
                        call_barrier=0.0, protection_barrier=-0.35, notional=100.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        initial_price: f64,
        term: f64,
        coupon_frequency_months: u32,
        coupon_rate: f64,
        coupon_barrier: f64,
        autocall_frequency_months: u32,
        call_barrier: f64,
        protection_barrier: f64,
        notional: f64,
    ) -> PyResult<Self> {
        let inner = AutocallableSpec {
            initial_price,
            term,
            coupon_frequency_months,
            coupon_rate,
            coupon_barrier,
            autocall_frequency_months,
            call_barrier,
            protection_barrier,
            notional,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// (coupon months, autocall months) since issue.
    fn observation_schedule(&self) -> (Vec<u32>, Vec<u32>) {
        instruments::observation_schedule(&self.inner)
    }

    /// Walk a monthly spot path; returns (flows as (time, amount) pairs,
    /// termination_time, terminated_by).
    fn note_lifecycle(&self, path: Vec<f64>) -> PyResult<(Vec<(f64, f64)>, f64, String)> {
        let lc = instruments::note_lifecycle(&self.inner, &path).map_err(value_err)?;
        let cause = match lc.terminated_by {
            instruments::Termination::Autocall => "autocall",
            instruments::Termination::Maturity => "maturity",
        };
        Ok((
            lc.flows.iter().map(|f| (f.time, f.amount)).collect(),
            lc.termination_time,
            cause.to_string(),
        ))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Simulate SABR paths; returns (spots, vols) as row-per-path nested lists.
#[pyfunction]
#[pyo3(signature = (params, n_steps, dt, n_paths, seed, stream_id=0))]
fn simulate_paths(
    params: &PySabrParams,
    n_steps: usize,
    dt: f64,
    n_paths: usize,
    seed: u64,
    stream_id: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let grid = TimeGrid::new(n_steps, dt);
    let paths = market::simulate_paths(
        &params.inner,
        &grid,
        n_paths,
        &RngStream::new(seed, stream_id),
    )
    .map_err(runtime_err)?;
    let n = paths.n_nodes();
    let spots = (0..n_paths)
        .map(|p| paths.spots[p * n..(p + 1) * n].to_vec())
        .collect();
    let vols = (0..n_paths)
        .map(|p| paths.vols[p * n..(p + 1) * n].to_vec())
        .collect();
    Ok((spots, vols))
}

/// Black-Scholes European price/greeks.
#[pyfunction]
#[pyo3(signature = (kind, spot, strike, vol, rate, ttm))]
fn bs_european<'py>(
    py: Python<'py>,
    kind: &str,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let v = pricing::bs_european(parse_kind(kind)?, spot, strike, vol, rate, ttm);
    valuation_dict(py, &v)
}

/// Cash-or-nothing digital price/greeks.
#[pyfunction]
#[pyo3(signature = (kind, spot, strike, vol, rate, ttm, cash_amount=1.0))]
#[allow(clippy::too_many_arguments)]
fn bs_digital<'py>(
    py: Python<'py>,
    kind: &str,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
    cash_amount: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let v = pricing::bs_digital(parse_kind(kind)?, spot, strike, vol, rate, ttm, cash_amount);
    valuation_dict(py, &v)
}

/// American option price on a CRR tree.
#[pyfunction]
#[pyo3(signature = (kind, spot, strike, vol, rate, ttm, steps=2000))]
#[allow(clippy::too_many_arguments)]
fn binomial_american(
    kind: &str,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    ttm: f64,
    steps: usize,
) -> PyResult<f64> {
    Ok(pricing::binomial_american(
        parse_kind(kind)?,
        spot,
        strike,
        vol,
        rate,
        ttm,
        steps,
    ))
}

/// Vanilla/digital payoff of one unit.
#[pyfunction]
#[pyo3(signature = (kind, strike, spot, cash_amount=1.0))]
fn vanilla_payoff(kind: &str, strike: f64, spot: f64, cash_amount: f64) -> PyResult<f64> {
    let spec = OptionSpec {
        kind: parse_kind(kind)?,
        strike,
        maturity: 0.0,
        cash_amount,
        quantity: 1.0,
    };
    Ok(instruments::vanilla_payoff(&spec, spot))
}

/// Monte Carlo note valuation with finite-difference greeks.
#[pyfunction]
#[pyo3(signature = (note, params, spot, vol_state, t_now, seed, n_mc_paths=2000, rate=0.0))]
#[allow(clippy::too_many_arguments)]
fn price_autocallable<'py>(
    py: Python<'py>,
    note: &PyAutocallableSpec,
    params: &PySabrParams,
    spot: f64,
    vol_state: f64,
    t_now: f64,
    seed: u64,
    n_mc_paths: usize,
    rate: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = PricerConfig {
        n_mc_paths,
        rate,
        ..PricerConfig::default()
    };
    let v = pricing::price_autocallable_mc(
        &note.inner,
        spot,
        vol_state,
        t_now,
        &params.inner,
        &config,
        &RngStream::new(seed, 8),
    );
    valuation_dict(py, &v)
}

/// Empirical q% VaR of PnL samples.
#[pyfunction]
fn var_q(samples: Vec<f64>, q: f64) -> PyResult<f64> {
    risk::var_q(&samples, q).map_err(value_err)
}

/// Empirical q% CVaR of PnL samples.
#[pyfunction]
fn cvar_q(samples: Vec<f64>, q: f64) -> PyResult<f64> {
    risk::cvar_q(&samples, q).map_err(value_err)
}

/// Full metric row as a dict.
#[pyfunction]
#[pyo3(signature = (samples, gamma_ratio=0.0))]
fn risk_report<'py>(
    py: Python<'py>,
    samples: Vec<f64>,
    gamma_ratio: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let report = risk::report(&risk::PnlSamples::new(samples, vec![]), gamma_ratio)
        .map_err(value_err)?;
    let json = serde_json::to_value(&report).map_err(runtime_err)?;
    let d = PyDict::new(py);
    if let serde_json::Value::Object(map) = json {
        for (k, v) in map {
            match v {
                serde_json::Value::Number(n) => d.set_item(k, n.as_f64())?,
                serde_json::Value::String(s) => d.set_item(k, s)?,
                serde_json::Value::Array(a) => {
                    d.set_item(k, a.iter().filter_map(|x| x.as_u64()).collect::<Vec<_>>())?
                }
                _ => {}
            }
        }
    }
    Ok(d)
}

/// The hedging environment, configured from a TOML string (same schema as
/// the CLI config file; empty string = defaults).
#[pyclass(name = "HedgeEnv", unsendable)]
struct PyHedgeEnv {
    setup: Arc<EnvSetup>,
    env: HedgeEnv,
    config: ExperimentConfig,
}

#[pymethods]
impl PyHedgeEnv {
    #[new]
    #[pyo3(signature = (config_toml=""))]
    fn new(config_toml: &str) -> PyResult<Self> {
        let config = ExperimentConfig::from_toml_str(config_toml).map_err(value_err)?;
        let setup = Arc::new(
            EnvSetup::new(
                config.market,
                config.note,
                config.env,
                config.pricer,
                RngStream::new(config.seeds.train, 9000),
            )
            .map_err(runtime_err)?,
        );
        let env = setup.make_env();
        Ok(Self { setup, env, config })
    }

    /// Start an episode; returns the observation feature list.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.env
            .reset(RngStream::new(seed, 2).substream(0))
            .features
            .to_vec()
    }

    /// Advance one step; returns (next_obs, reward, done).
    fn step(&mut self, action: f64) -> PyResult<(Vec<f64>, f64, bool)> {
        let tr = self.env.step(action).map_err(runtime_err)?;
        Ok((tr.next_obs.features.to_vec(), tr.reward, tr.done))
    }

    /// Action a named baseline would take for an observation:
    /// none | delta | delta-gamma | const:<c>.
    fn baseline_action(&self, strategy: &str, obs: Vec<f64>) -> PyResult<f64> {
        let s = Strategy::parse_baseline(strategy)
            .ok_or_else(|| value_err(format!("unknown strategy '{strategy}'")))?;
        let mut features = [0.0; 3];
        for (f, o) in features.iter_mut().zip(&obs) {
            *f = *o;
        }
        Ok(s.act(
            &hedgelab::env::Observation { features },
            &self.setup.config,
        ))
    }

    #[getter]
    fn spot(&self) -> f64 {
        self.env.state().spot
    }

    #[getter]
    fn book_value(&self) -> f64 {
        self.env.state().book_value
    }

    #[getter]
    fn portfolio_gamma(&self) -> f64 {
        self.env.state().portfolio_gamma()
    }

    #[getter]
    fn done(&self) -> bool {
        self.env.is_done()
    }

    fn config_fingerprint(&self) -> String {
        self.config.fingerprint()
    }
}

/// Act with a trained policy file on an observation.
#[pyfunction]
fn policy_action(policy_path: &str, obs: Vec<f64>) -> PyResult<f64> {
    let snapshot = PolicySnapshot::load(std::path::Path::new(policy_path)).map_err(runtime_err)?;
    Ok(snapshot.actor().act(&obs))
}

/// Run the experiment CLI with the given argument list (without the program
/// name); returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let mut argv = vec!["hedgelab".to_string()];
    argv.extend(args);
    hedgelab::cli::run_command(argv)
}

#[pymodule]
#[pyo3(name = "hedgelab")]
fn hedgelab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySabrParams>()?;
    m.add_class::<PyAutocallableSpec>()?;
    m.add_class::<PyHedgeEnv>()?;
    m.add_function(wrap_pyfunction!(simulate_paths, m)?)?;
    m.add_function(wrap_pyfunction!(bs_european, m)?)?;
    m.add_function(wrap_pyfunction!(bs_digital, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_american, m)?)?;
    m.add_function(wrap_pyfunction!(vanilla_payoff, m)?)?;
    m.add_function(wrap_pyfunction!(price_autocallable, m)?)?;
    m.add_function(wrap_pyfunction!(var_q, m)?)?;
    m.add_function(wrap_pyfunction!(cvar_q, m)?)?;
    m.add_function(wrap_pyfunction!(risk_report, m)?)?;
    m.add_function(wrap_pyfunction!(policy_action, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
