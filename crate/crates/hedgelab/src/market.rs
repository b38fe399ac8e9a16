//! SABR market simulator.
//!
//! The underlying index follows a GBM-with-stochastic-volatility process:
//!
//! ```text
//! x_{t+dt} = x_t * exp((mu - 0.5 * s_t^2 * x_t^(2(beta-1))) * dt + s_t * x_t^(beta-1) * sqrt(dt) * Z1)
//! s_{t+dt} = s_t * exp(-0.5 * nu^2 * dt + nu * sqrt(dt) * Z2)
//! corr(Z1, Z2) = rho
//! ```
//!
//! The spot uses a log-Euler step (spots stay positive), the volatility step is
//! the exact lognormal solution of `ds = nu * s * dW`. Every path draws from its
//! own counter-derived random stream, so path batches can be simulated in
//! parallel with a deterministic result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid SABR parameters: {0}")]
    InvalidParams(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite state after SABR step (spot={spot}, vol={vol})")]
    NonFiniteStep { spot: f64, vol: f64 },
    #[error("non-finite value in simulated path {path} at step {step}")]
    NonFinitePath { path: usize, step: usize },
}

/// SABR model parameters. `sigma0` is the initial instantaneous volatility,
/// `beta` the elasticity exponent, `rho` the spot-vol correlation and `nu`
/// the volatility of volatility. `mu` is the real-world drift used by the
/// market simulator; pricers substitute their own risk-free rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SabrParams {
    pub spot0: f64,
    pub mu: f64,
    pub sigma0: f64,
    pub beta: f64,
    pub rho: f64,
    pub nu: f64,
}

impl Default for SabrParams {
    fn default() -> Self {
        Self {
            spot0: 100.0,
            mu: 0.0,
            sigma0: 0.2,
            beta: 1.0,
            rho: -0.4,
            nu: 0.3,
        }
    }
}

impl SabrParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.spot0 > 0.0) {
            return Err(MarketError::InvalidParams(format!(
                "market.spot0 must be > 0, got {}",
                self.spot0
            )));
        }
        if !(self.sigma0 >= 0.0) {
            return Err(MarketError::InvalidParams(format!(
                "market.sigma0 must be >= 0, got {}",
                self.sigma0
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(MarketError::InvalidParams(format!(
                "market.beta must be in [0, 1], got {}",
                self.beta
            )));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(MarketError::InvalidParams(format!(
                "market.rho must be in (-1, 1), got {}",
                self.rho
            )));
        }
        if !(self.nu >= 0.0) {
            return Err(MarketError::InvalidParams(format!(
                "market.nu must be >= 0, got {}",
                self.nu
            )));
        }
        if !self.mu.is_finite() {
            return Err(MarketError::InvalidParams(format!(
                "market.mu must be finite, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// Uniform time grid: `n_steps` steps of length `dt`, starting at `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub dt: f64,
    pub t0: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, dt: f64) -> Self {
        Self { n_steps, dt, t0: 0.0 }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.n_steps < 1 {
            return Err(MarketError::InvalidGrid("n_steps must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(MarketError::InvalidGrid(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    /// Time of grid node `i` (0 ..= n_steps).
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Identifier of an independent random stream. The same `(seed, stream_id)`
/// always yields the same draw sequence; `substream` derives further
/// independent streams, which is how per-path and per-purpose randomness is
/// split without any shared mutable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derive an independent child stream.
    pub fn substream(&self, k: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(k.wrapping_add(0xA076_1D64_78BD_642F))),
        }
    }

    /// Materialize the generator for this stream.
    pub fn sampler(&self) -> Sampler {
        let mut state = splitmix64(self.seed ^ 0x8536_5F5C_9F6E_3B21);
        state = splitmix64(state ^ self.stream_id);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Sampler {
            rng: ChaCha8Rng::from_seed(key),
        }
    }
}

/// Draw source for one stream. Wraps the generator so every consumer uses the
/// same draw order and distributions.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Pair of standard normals with correlation `rho`.
    pub fn correlated_normals(&mut self, rho: f64) -> (f64, f64) {
        let z1: f64 = self.standard_normal();
        let w: f64 = self.standard_normal();
        (z1, rho * z1 + (1.0 - rho * rho).sqrt() * w)
    }

    pub fn uniform(&mut self) -> f64 {
        Uniform::new(0.0, 1.0).unwrap().sample(&mut self.rng)
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).unwrap().sample(&mut self.rng) as u64
    }
}

/// Simulated spot/vol trajectories on a uniform grid. Row-major storage:
/// `spots[path * (n_steps + 1) + step]`. Column 0 holds `(spot0, sigma0)`.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub spots: Vec<f64>,
    pub vols: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

impl PathSet {
    pub fn n_nodes(&self) -> usize {
        self.grid.n_steps + 1
    }

    pub fn spot(&self, path: usize, step: usize) -> f64 {
        self.spots[path * self.n_nodes() + step]
    }

    pub fn vol(&self, path: usize, step: usize) -> f64 {
        self.vols[path * self.n_nodes() + step]
    }

    pub fn spot_row(&self, path: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.spots[path * n..(path + 1) * n]
    }
}

/// Log-Euler spot increment with the current instantaneous volatility.
pub fn spot_increment(spot: f64, vol: f64, params: &SabrParams, dt: f64, z1: f64) -> f64 {
    let local_vol = vol * spot.powf(params.beta - 1.0);
    spot * ((params.mu - 0.5 * local_vol * local_vol) * dt + local_vol * dt.sqrt() * z1).exp()
}

/// Exact lognormal volatility increment for `ds = nu * s * dW`.
pub fn vol_increment(vol: f64, params: &SabrParams, dt: f64, z2: f64) -> f64 {
    vol * (-0.5 * params.nu * params.nu * dt + params.nu * dt.sqrt() * z2).exp()
}

/// One increment of the SABR scheme: log-Euler spot step with the current
/// volatility, exact lognormal volatility step. Composing `n` calls on one
/// sampler reproduces an `n`-step simulated path draw for draw.
pub fn step_state(
    spot: f64,
    vol: f64,
    params: &SabrParams,
    dt: f64,
    sampler: &mut Sampler,
) -> Result<(f64, f64), MarketError> {
    let (z1, z2) = sampler.correlated_normals(params.rho);
    let next_spot = spot_increment(spot, vol, params, dt, z1);
    let next_vol = vol_increment(vol, params, dt, z2);
    if !next_spot.is_finite() || !next_vol.is_finite() {
        return Err(MarketError::NonFiniteStep {
            spot: next_spot,
            vol: next_vol,
        });
    }
    Ok((next_spot, next_vol))
}

/// Simulate `n_paths` SABR paths. Path `p` draws from `rng.substream(p)`, so
/// the result is a pure function of `(params, grid, n_paths, seed, stream_id)`
/// and independent of how the path loop is scheduled.
pub fn simulate_paths(
    params: &SabrParams,
    grid: &TimeGrid,
    n_paths: usize,
    rng: &RngStream,
) -> Result<PathSet, MarketError> {
    params.validate()?;
    grid.validate()?;
    let n_nodes = grid.n_steps + 1;

    let rows: Result<Vec<(Vec<f64>, Vec<f64>)>, MarketError> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut sampler = rng.substream(p as u64).sampler();
            let mut spots = Vec::with_capacity(n_nodes);
            let mut vols = Vec::with_capacity(n_nodes);
            let mut spot = params.spot0;
            let mut vol = params.sigma0;
            spots.push(spot);
            vols.push(vol);
            for step in 0..grid.n_steps {
                (spot, vol) = step_state(spot, vol, params, grid.dt, &mut sampler)
                    .map_err(|_| MarketError::NonFinitePath { path: p, step })?;
                spots.push(spot);
                vols.push(vol);
            }
            Ok((spots, vols))
        })
        .collect();
    let rows = rows?;

    let mut spots = Vec::with_capacity(n_paths * n_nodes);
    let mut vols = Vec::with_capacity(n_paths * n_nodes);
    for (s, v) in rows {
        spots.extend_from_slice(&s);
        vols.extend_from_slice(&v);
    }
    Ok(PathSet {
        grid: *grid,
        n_paths,
        spots,
        vols,
        seed: rng.seed,
        stream_id: rng.stream_id,
    })
}
