//! Experiment configuration: a TOML file with sections mirroring the module
//! names, strict about unknown keys, with mode-dependent defaults applied and
//! echoed into a content fingerprint that every output file embeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::drl::TrainerConfig;
use crate::env::{EnvConfig, EnvMode, HedgeInstrument};
use crate::instruments::AutocallableSpec;
use crate::market::SabrParams;
use crate::pricing::PricerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub train: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { train: 1, eval: 2 }
    }
}

/// Fully resolved experiment configuration. The output directory is
/// excluded from serialization so the fingerprint only covers settings that
/// affect results.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub market: SabrParams,
    pub note: AutocallableSpec,
    pub env: EnvConfig,
    pub pricer: PricerConfig,
    pub trainer: TrainerConfig,
    pub seeds: Seeds,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: SabrParams::default(),
            note: AutocallableSpec::default(),
            env: EnvConfig::for_mode(EnvMode::Autocallable),
            pricer: PricerConfig::default(),
            trainer: TrainerConfig::default(),
            seeds: Seeds::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Raw `[env]` section: everything optional so mode-specific defaults can
/// fill the gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EnvSection {
    mode: Option<EnvMode>,
    dt: Option<f64>,
    kappa: Option<f64>,
    hedge_instrument: Option<HedgeInstrument>,
    max_hedge_multiplier: Option<f64>,
    rate: Option<f64>,
    arrival_lambda: Option<f64>,
    horizon: Option<f64>,
    auto_delta_hedge: Option<bool>,
    early_exercise: Option<bool>,
    underlying_cost_kappa: Option<f64>,
}

impl EnvSection {
    fn resolve(&self) -> EnvConfig {
        let mut env = EnvConfig::for_mode(self.mode.unwrap_or(EnvMode::Autocallable));
        if let Some(v) = self.dt {
            env.dt = v;
        }
        if let Some(v) = self.kappa {
            env.kappa = v;
        }
        if let Some(v) = self.hedge_instrument {
            env.hedge_instrument = v;
        }
        if let Some(v) = self.max_hedge_multiplier {
            env.max_hedge_multiplier = v;
        }
        if let Some(v) = self.rate {
            env.rate = v;
        }
        if let Some(v) = self.arrival_lambda {
            env.arrival_lambda = v;
        }
        if let Some(v) = self.horizon {
            env.horizon = v;
        }
        if let Some(v) = self.auto_delta_hedge {
            env.auto_delta_hedge = v;
        }
        if let Some(v) = self.early_exercise {
            env.early_exercise = v;
        }
        if let Some(v) = self.underlying_cost_kappa {
            env.underlying_cost_kappa = v;
        }
        env
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    market: Option<SabrParams>,
    note: Option<AutocallableSpec>,
    env: EnvSection,
    pricer: Option<PricerConfig>,
    trainer: Option<TrainerConfig>,
    seeds: Option<Seeds>,
    output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: FileConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let config = Self {
            market: file.market.unwrap_or_default(),
            note: file.note.unwrap_or_default(),
            env: file.env.resolve(),
            pricer: file.pricer.unwrap_or_default(),
            trainer: file.trainer.unwrap_or_default(),
            seeds: file.seeds.unwrap_or_default(),
            output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.note
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.env
            .validate()
            .map_err(|e| match e {
                crate::env::EnvError::InvalidConfig(msg) => ConfigError::Invalid(msg),
                other => ConfigError::Invalid(other.to_string()),
            })?;
        self.pricer
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.trainer
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Content hash of the fully resolved configuration. Two runs agree on
    /// this hex string iff every effective setting (seeds included) agrees.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_stable_defaults() {
        let a = ExperimentConfig::from_toml_str("").unwrap();
        let b = ExperimentConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.env.dt, 1.0 / 12.0);
        assert_eq!(a.note.coupon_rate, 0.0095);
    }

    #[test]
    fn invariant_violation_names_the_key() {
        let err = ExperimentConfig::from_toml_str("[env]\nkappa = -0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("env.kappa"), "message was: {msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::from_toml_str("[env]\nbogus_knob = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_knob"));
    }

    #[test]
    fn override_changes_fingerprint() {
        let base = ExperimentConfig::from_toml_str("").unwrap();
        let tweaked = ExperimentConfig::from_toml_str("[trainer]\nepisodes = 2000\n").unwrap();
        assert_ne!(base.fingerprint(), tweaked.fingerprint());
        assert_eq!(tweaked.trainer.episodes, 2000);
    }

    #[test]
    fn vanilla_mode_defaults_follow_the_mode() {
        let c = ExperimentConfig::from_toml_str("[env]\nmode = \"vanilla_flow\"\n").unwrap();
        assert_eq!(c.env.dt, 1.0 / 252.0);
        assert_eq!(c.env.max_hedge_multiplier, 1.0);
        assert_eq!(c.env.arrival_lambda, 1.0);
        let c2 = ExperimentConfig::from_toml_str(
            "[env]\nmode = \"vanilla_flow\"\nmax_hedge_multiplier = 2.5\n",
        )
        .unwrap();
        assert_eq!(c2.env.max_hedge_multiplier, 2.5);
    }

    #[test]
    fn seed_section_parses() {
        let c = ExperimentConfig::from_toml_str("[seeds]\ntrain = 11\neval = 12\n").unwrap();
        assert_eq!(c.seeds.train, 11);
        assert_eq!(c.seeds.eval, 12);
    }
}
