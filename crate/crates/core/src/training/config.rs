use std::path::Path;

use crate::binio::read_text;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::proxy::DEFAULT_REPEAT_THRESHOLD;

/// Optimization and objective settings for [`train`](super::train).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub temperature: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_iters: usize,
    pub total_epochs: usize,
    /// Overrides `total_epochs` when set.
    pub total_steps: Option<usize>,
    pub seed: u64,
    pub repeat_threshold: f64,
    /// Threads for per-sample forward/backward. Results are reduced in batch
    /// order, so the outcome does not depend on this value.
    pub workers: usize,
    pub encoder: EncoderConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            temperature: 0.07,
            lambda1: 0.5,
            lambda2: 0.5,
            learning_rate: 0.006,
            weight_decay: 0.03,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_iters: 1000,
            total_epochs: 100,
            total_steps: None,
            seed: 0,
            repeat_threshold: DEFAULT_REPEAT_THRESHOLD,
            workers: 1,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.batch_size < 2 {
            return fail(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.repeat_threshold > 0.0 && self.repeat_threshold <= 1.0) {
            return fail(format!(
                "repeat threshold must lie in (0, 1], got {}",
                self.repeat_threshold
            ));
        }
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        if self.total_steps == Some(0) || (self.total_steps.is_none() && self.total_epochs == 0) {
            return fail("training needs at least one step".into());
        }
        self.encoder.validate()
    }

    /// Applies `key = value` overrides. Unknown keys are rejected.
    pub fn apply_text(&mut self, text: &str, context: &str) -> Result<()> {
        let kv = KeyValues::parse(text, context)?;
        for key in kv.keys() {
            let bad_key = || Error::Config(format!("{context}: unknown key {key:?}"));
            let v = kv.get(key).unwrap_or_default();
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("{context}: {key} = {s:?} is not a number")))
            };
            let count = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::Config(format!("{context}: {key} = {s:?} is not a count")))
            };
            match key {
                "batch_size" => self.batch_size = count(v)?,
                "temperature" => self.temperature = num(v)?,
                "lambda1" => self.lambda1 = num(v)?,
                "lambda2" => self.lambda2 = num(v)?,
                "learning_rate" => self.learning_rate = num(v)?,
                "weight_decay" => self.weight_decay = num(v)?,
                "beta1" => self.beta1 = num(v)?,
                "beta2" => self.beta2 = num(v)?,
                "epsilon" => self.epsilon = num(v)?,
                "warmup_iters" => self.warmup_iters = count(v)?,
                "total_epochs" => self.total_epochs = count(v)?,
                "total_steps" => self.total_steps = Some(count(v)?),
                "seed" => {
                    self.seed = v
                        .parse()
                        .map_err(|_| Error::Config(format!("{context}: seed = {v:?} is not an integer")))?
                }
                "repeat_threshold" => self.repeat_threshold = num(v)?,
                "workers" => self.workers = count(v)?,
                "hidden1" => self.encoder.hidden1 = count(v)?,
                "hidden2" => self.encoder.hidden2 = count(v)?,
                "hidden3" => self.encoder.hidden3 = count(v)?,
                "embed_dim" => self.encoder.embed_dim = count(v)?,
                "num_points" => self.encoder.num_points = count(v)?,
                _ => return Err(bad_key()),
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&read_text(path)?, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }
}
