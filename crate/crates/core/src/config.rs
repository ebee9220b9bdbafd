use serde::{Deserialize, Serialize};

use crate::DEFAULT_SEED;

/// Knobs shared by every estimator. Echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub seed: u64,
    /// Random restarts for search-based bounds.
    pub restarts: usize,
    /// Hill-climb steps per restart.
    pub iterations: usize,
    /// Residual tolerance for certificate re-verification.
    pub tolerance: f64,
    /// Largest |X| for Lipschitz-ball vertex enumeration.
    pub vertex_cap: usize,
    /// Largest dimension for ℓ_1/ℓ_∞ ball vertex enumeration.
    pub dim_cap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: DEFAULT_SEED,
            restarts: 64,
            iterations: 400,
            tolerance: crate::estimate::CERT_TOLERANCE,
            vertex_cap: crate::free_space::LIP_VERTEX_CAP,
            dim_cap: 16,
        }
    }
}

impl Config {
    pub fn with_seed(seed: u64) -> Self {
        Config {
            seed,
            ..Config::default()
        }
    }

    /// Applies the `LIPNORM_SEED` override if set and parseable.
    pub fn from_env(mut self) -> Self {
        if let Some(s) = std::env::var("LIPNORM_SEED").ok().and_then(|v| parse_seed(&v)) {
            self.seed = s;
        }
        self
    }

    /// Same settings, derived seed for a sub-computation.
    pub fn child(&self, salt: u64) -> Config {
        Config {
            seed: self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ..self.clone()
        }
    }
}

/// Accepts decimal or 0x-prefixed hex.
pub fn parse_seed(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}
