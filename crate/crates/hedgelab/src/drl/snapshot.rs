//! Serializable policy container: actor and critic parameters, observation
//! normalization, the config fingerprint and the training seed. JSON floats
//! round-trip bit-exactly (shortest-representation encoding).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::env::Normalization;

pub const SNAPSHOT_VERSION: u32 = 1;

/// Deterministic policy: the actor network plus the observation
/// normalization it was trained under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Actor {
    pub net: Mlp,
    pub gamma_scale: f64,
    pub tau_scale: f64,
}

impl Actor {
    pub fn act(&self, features: &[f64]) -> f64 {
        self.net.forward(features)[0]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub version: u32,
    pub obs_dim: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub gamma_scale: f64,
    pub tau_scale: f64,
    pub config_fingerprint: String,
    pub train_seed: u64,
    pub episodes_trained: usize,
}

impl PolicySnapshot {
    pub fn actor(&self) -> Actor {
        Actor {
            net: self.actor.clone(),
            gamma_scale: self.gamma_scale,
            tau_scale: self.tau_scale,
        }
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            gamma_scale: self.gamma_scale,
            tau_scale: self.tau_scale,
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("snapshot serialization");
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let data = std::fs::read_to_string(path)?;
        serde_json::from_str(&data)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
