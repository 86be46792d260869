use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::candidates::{Condition, Matcher};
use crate::decoder::{AnswererSettings, Variant};
use crate::encoder::{EncoderConfig, DEFAULT_VOCAB_CAP};
use crate::heads::{LossWeights, ModelOptions, OptimizerConfig};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub answerer: AnswererSettings,
    /// `vocab_size` is filled in from the training data.
    pub encoder: EncoderConfig,
    pub model: ModelOptions,
    pub vocab_cap: usize,
    pub matcher: Matcher,
    pub weights: LossWeights,
    /// Negatives kept per positive in each epoch.
    pub negative_ratio: f64,
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    /// Masked-LM steps run before the joint objective.
    pub pretrain_steps: usize,
    /// Tokens hidden per input during masked-LM pretraining.
    pub pretrain_masks: usize,
    pub optimizer: OptimizerConfig,
    /// Log losses (and evaluate on dev, when given) every this many steps.
    pub eval_every: usize,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Preset::AnswerOnly.config()
    }
}

/// Named starting points for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    AnswerOnly,
    Context,
    Base,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::AnswerOnly, Preset::Context, Preset::Base];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::AnswerOnly => "answeronly",
            Preset::Context => "context",
            Preset::Base => "base",
        }
    }

    pub fn config(self) -> TrainConfig {
        let (answerer, weights) = match self {
            Preset::AnswerOnly => (
                AnswererSettings { condition: Condition::AnswerOnly, m: 5, k: 3, ..AnswererSettings::default() },
                LossWeights::new(3.0, 0.1, 10.0, 0.0),
            ),
            Preset::Context => (
                AnswererSettings { condition: Condition::Context, window: 5, m: 4, k: 3, ..AnswererSettings::default() },
                LossWeights::new(3.0, 10.0, 3.0, 1.0),
            ),
            Preset::Base => (
                AnswererSettings { variant: Variant::Base, condition: Condition::AnswerOnly, m: 5, k: 3, ..AnswererSettings::default() },
                LossWeights::new(1.0, 0.0, 0.0, 0.0),
            ),
        };
        TrainConfig {
            answerer,
            encoder: EncoderConfig::default(),
            model: ModelOptions::default(),
            vocab_cap: DEFAULT_VOCAB_CAP,
            matcher: Matcher::ExactSpan,
            weights,
            negative_ratio: 2.0,
            seed: 0,
            steps: 2000,
            batch_size: 16,
            pretrain_steps: 2000,
            pretrain_masks: 3,
            optimizer: OptimizerConfig::default(),
            eval_every: 100,
            checkpoint_every: 0,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "answeronly" => Ok(Preset::AnswerOnly),
            "context" => Ok(Preset::Context),
            "base" => Ok(Preset::Base),
            _ => Err(format!("unknown preset {s:?} (expected answeronly, context or base)")),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.answerer.validate()?;
        self.weights.validate()?;
        self.optimizer.validate()?;
        let w = &self.weights;
        if w.answer + w.evidence + w.impossible + w.mlm <= 0.0 {
            return Err("at least one loss weight must be positive".into());
        }
        if self.answerer.variant == Variant::Base && (w.evidence > 0.0 || w.mlm > 0.0) {
            return Err("the base variant trains only the answer and impossibility losses".into());
        }
        if self.negative_ratio <= 0.0 || !self.negative_ratio.is_finite() {
            return Err(format!("negative_ratio must be positive, got {}", self.negative_ratio));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if self.vocab_cap <= crate::candidates::RESERVED.len() {
            return Err("vocab_cap leaves no room for data tokens".into());
        }
        let probe = EncoderConfig { vocab_size: self.vocab_cap, ..self.encoder.clone() };
        probe.validate()
    }

    /// Builds a config from a preset, then a JSON object whose keys replace
    /// the preset's (objects merge recursively).
    pub fn layered(preset: Preset, overlay: Option<&Value>) -> Result<TrainConfig, String> {
        let mut base = serde_json::to_value(preset.config()).map_err(|e| e.to_string())?;
        if let Some(o) = overlay {
            if !o.is_object() {
                return Err("configuration file must hold a JSON object".into());
            }
            merge(&mut base, o);
        }
        serde_json::from_value(base).map_err(|e| format!("invalid configuration: {e}"))
    }
}

pub fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_carry_their_hyperparameters() {
        let a = Preset::AnswerOnly.config();
        assert_eq!((a.answerer.m, a.answerer.k), (5, 3));
        assert_eq!(a.weights, LossWeights::new(3.0, 0.1, 10.0, 0.0));
        let c = Preset::Context.config();
        assert_eq!((c.answerer.m, c.answerer.k), (4, 3));
        assert_eq!(c.weights, LossWeights::new(3.0, 10.0, 3.0, 1.0));
        for p in Preset::ALL {
            p.config().validate().unwrap();
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn overlay_replaces_nested_keys_only() {
        let c = TrainConfig::layered(Preset::Context, Some(&json!({"answerer": {"k": 2}, "steps": 7}))).unwrap();
        assert_eq!((c.answerer.m, c.answerer.k, c.steps), (4, 2, 7));
        assert_eq!(c.answerer.condition, Condition::Context);
        assert!(TrainConfig::layered(Preset::Context, Some(&json!({"stepz": 7}))).is_err());
        assert!(TrainConfig::layered(Preset::Context, Some(&json!([1]))).is_err());
    }

    #[test]
    fn validation() {
        let mut c = Preset::AnswerOnly.config();
        c.weights = LossWeights::new(0.0, 0.0, 0.0, 0.0);
        assert!(c.validate().is_err());
        let mut c = Preset::AnswerOnly.config();
        c.answerer.k = 6;
        assert!(c.validate().is_err());
        let mut c = Preset::AnswerOnly.config();
        c.encoder.heads = 5;
        assert!(c.validate().is_err());
    }
}
