//! Goal-conditioned soft actor-critic with replay and hindsight relabeling.

mod buffer;
mod relabel;
mod sac;

use serde::{Deserialize, Serialize};

use crate::ndmath::Activation;
use crate::{Error, Result};

pub use buffer::{AnchorStrategy, ReplayBuffer, SampledTransition, Transition};
pub use relabel::{check_fraction, goal_relabel_her, pher_relabel, PosteriorDraw, RelabelKind};
pub use sac::{SacAgent, SacBatch, SacLosses, SacNoise, SacOptimizers, LOG_STD_MAX, LOG_STD_MIN};

mod defaults {
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn tau() -> f64 {
        0.005
    }
    pub fn batch_size() -> usize {
        256
    }
    pub fn buffer_capacity() -> usize {
        100_000
    }
    pub fn hidden() -> Vec<usize> {
        vec![256, 256]
    }
    pub fn lr() -> f64 {
        3e-4
    }
    pub fn yes() -> bool {
        true
    }
    pub fn init_alpha() -> f64 {
        1.0
    }
    pub fn relabel_fraction() -> f64 {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    /// Polyak coefficient for the target critics.
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::buffer_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "defaults::lr")]
    pub actor_lr: f64,
    #[serde(default = "defaults::lr")]
    pub critic_lr: f64,
    #[serde(default = "defaults::lr")]
    pub alpha_lr: f64,
    /// Learn the entropy temperature toward `target_entropy`.
    #[serde(default = "defaults::yes")]
    pub auto_temperature: bool,
    #[serde(default = "defaults::init_alpha")]
    pub init_alpha: f64,
    /// Defaults to `-action_dim`.
    #[serde(default)]
    pub target_entropy: Option<f64>,
    #[serde(default)]
    pub relabel: RelabelKind,
    #[serde(default = "defaults::relabel_fraction")]
    pub relabel_fraction: f64,
    #[serde(default)]
    pub relabel_strategy: AnchorStrategy,
    #[serde(default)]
    pub relabel_draw: PosteriorDraw,
}

impl Default for AgentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all agent fields have defaults")
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("agent.gamma", "must be in [0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("agent.tau", "must be in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("agent.batch_size", "must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("agent.buffer_capacity", "must be >= 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("agent.hidden", "need at least one nonzero hidden layer"));
        }
        for (field, lr) in [
            ("agent.actor_lr", self.actor_lr),
            ("agent.critic_lr", self.critic_lr),
            ("agent.alpha_lr", self.alpha_lr),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::config(field, "must be a finite value >= 0"));
            }
        }
        if !(self.init_alpha >= 0.0 && self.init_alpha.is_finite()) {
            return Err(Error::config("agent.init_alpha", "must be >= 0"));
        }
        if self.auto_temperature && self.init_alpha == 0.0 {
            return Err(Error::config("agent.init_alpha", "a learned temperature needs init_alpha > 0"));
        }
        check_fraction(self.relabel_fraction)
    }
}
