use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Trust,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityMode {
    #[default]
    Both,
    TextOnly,
    ImageOnly,
}

impl ModalityMode {
    pub fn uses_text(self) -> bool {
        !matches!(self, ModalityMode::ImageOnly)
    }

    pub fn uses_image(self) -> bool {
        !matches!(self, ModalityMode::TextOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss_mode: LossMode,
    pub modality_mode: ModalityMode,
    pub seed: u64,
    pub detector: DetectorConfig,
    /// Runtime-only; results do not depend on it.
    #[serde(skip)]
    pub execution: Execution,
}

impl TrainConfig {
    /// Defaults: Adam(lr 0.001, β = (0.9, 0.999), ε = 1e-8), 800 epochs, batch 32.
    pub fn new(detector: DetectorConfig) -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 800,
            batch_size: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss_mode: LossMode::Trust,
            modality_mode: ModalityMode::Both,
            seed: 0,
            detector,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Argument("Adam betas must lie in [0, 1)".into()));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Argument("adam_eps must be > 0".into()));
        }
        self.detector.validate()
    }
}
