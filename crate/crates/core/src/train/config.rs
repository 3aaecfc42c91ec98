use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::InitMode;
use crate::tensor::Precision;

/// Which labels drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Setting {
    /// Per-segment labels, categorical cross-entropy per segment.
    #[default]
    Supervised,
    /// Video-level labels only, binary cross-entropy on pooled predictions.
    Weak,
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Setting::Supervised),
            "weak" => Ok(Setting::Weak),
            other => Err(Error::Config(format!("unknown setting {other:?}"))),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Supervised => "supervised",
            Setting::Weak => "weak",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub setting: Setting,
    pub init_mode: InitMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub hidden: usize,
    pub precision: Precision,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Weight of the auxiliary video-level losses in `label_guided` mode.
    pub aux_weight: f64,
    pub forget_bias: f64,
    /// Worker threads for per-video gradients; 1 runs on the calling thread.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            setting: Setting::Supervised,
            init_mode: InitMode::Fusion,
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: Some(5.0),
            seed: 0,
            hidden: 128,
            precision: Precision::Standard,
            patience: 20,
            aux_weight: 1.0,
            forget_bias: 1.0,
            threads: 1,
        }
    }
}

pub const CONFIG_KEYS: [&str; 16] = [
    "setting",
    "init",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "clip_norm",
    "seed",
    "hidden",
    "precision",
    "patience",
    "aux_weight",
    "forget_bias",
    "threads",
];

impl TrainConfig {
    /// Applies any keys present in `kv` on top of `self`.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.reject_unknown(&CONFIG_KEYS)?;
        kv.apply("setting", &mut self.setting)?;
        kv.apply("init", &mut self.init_mode)?;
        kv.apply("epochs", &mut self.epochs)?;
        kv.apply("batch_size", &mut self.batch_size)?;
        kv.apply("lr", &mut self.learning_rate)?;
        kv.apply("beta1", &mut self.beta1)?;
        kv.apply("beta2", &mut self.beta2)?;
        kv.apply("adam_eps", &mut self.adam_eps)?;
        if let Some(raw) = kv.raw("clip_norm") {
            self.clip_norm = match raw {
                "none" | "0" => None,
                _ => Some(kv.get("clip_norm")?.expect("present")),
            };
        }
        kv.apply("seed", &mut self.seed)?;
        kv.apply("hidden", &mut self.hidden)?;
        kv.apply("precision", &mut self.precision)?;
        kv.apply("patience", &mut self.patience)?;
        kv.apply("aux_weight", &mut self.aux_weight)?;
        kv.apply("forget_bias", &mut self.forget_bias)?;
        kv.apply("threads", &mut self.threads)?;
        Ok(())
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply(kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("adam betas must be in [0, 1): {} {}", self.beta1, self.beta2));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be > 0".into());
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("clip_norm must be > 0, got {c}"));
            }
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parse_from_text() {
        let kv = KeyValues::parse(
            "setting=weak\ninit=label_guided\nepochs=3\nlr=0.01\nclip_norm=none\nprecision=checking\n",
        )
        .unwrap();
        let cfg = TrainConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.setting, Setting::Weak);
        assert_eq!(cfg.init_mode, InitMode::LabelGuided);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.clip_norm, None);
        assert_eq!(cfg.precision, Precision::Checking);
        assert!(TrainConfig::from_key_values(&KeyValues::parse("lr=fast").unwrap()).is_err());
        assert!(TrainConfig::from_key_values(&KeyValues::parse("what=1").unwrap()).is_err());
    }
}
