use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::losses::LossWeights;
use crate::networks::{DiscriminatorConfig, GeneratorConfig};
use crate::{Error, Result};

/// Network widths used for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPreset {
    Standard,
    Toy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay_per_epoch: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub image_size: usize,
    pub preset: ModelPreset,
    /// Seed of the frozen toy identity extractor.
    pub extractor_seed: u64,
    /// Stop after this many generator steps, even mid-epoch.
    pub max_steps: Option<u64>,
    /// Align raw images onto the landmark template before training.
    pub align: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 2e-4,
            lr_decay_per_epoch: 2e-5,
            beta1: 0.5,
            beta2: 0.99,
            adam_eps: 1e-8,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            weights: LossWeights::default(),
            image_size: 128,
            preset: ModelPreset::Standard,
            extractor_seed: 11,
            max_steps: None,
            align: false,
        }
    }
}

impl TrainConfig {
    /// Desk-scale settings for the toy corpus.
    pub fn toy(size: usize) -> Self {
        Self {
            batch_size: 8,
            image_size: size,
            preset: ModelPreset::Toy,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return bad(format!("lr0 must be >= 0, got {}", self.lr0));
        }
        if !(self.lr_decay_per_epoch.is_finite() && self.lr_decay_per_epoch >= 0.0) {
            return bad(format!(
                "lr_decay_per_epoch must be >= 0, got {}",
                self.lr_decay_per_epoch
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive".into());
        }
        self.weights.validate()?;
        self.generator_config().validate()?;
        self.discriminator_config().validate()
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        match self.preset {
            ModelPreset::Standard => GeneratorConfig::standard(self.image_size),
            ModelPreset::Toy => GeneratorConfig::toy(self.image_size),
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        match self.preset {
            ModelPreset::Standard => DiscriminatorConfig::standard(self.image_size),
            ModelPreset::Toy => DiscriminatorConfig::toy(self.image_size),
        }
    }
}

/// `max(0, lr0 − epoch · decay)`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: u64) -> f64 {
    (config.lr0 - epoch as f64 * config.lr_decay_per_epoch).max(0.0)
}
