use crate::error::{Error, Result};
use crate::kv::{self, Kv, Reader};
use crate::np::NpConfig;

/// Optimizer, schedule and evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Train and score on `ln(1 + y)`; MAE is reported after `expm1`.
    pub log_space_outputs: bool,
    pub eval_latent_samples: usize,
    /// Bounds of the per-batch context fraction.
    pub context_fraction_min: f64,
    pub context_fraction_max: f64,
}

impl TrainConfig {
    pub fn as_sir() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            patience: 1000,
            max_epochs: 2000,
            seed: 0,
            log_space_outputs: true,
            eval_latent_samples: 32,
            context_fraction_min: 0.2,
            context_fraction_max: 0.8,
        }
    }

    pub fn climate() -> Self {
        TrainConfig { learning_rate: 5e-3, batch_size: 32, patience: 250, log_space_outputs: false, ..Self::as_sir() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("TrainConfig: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive and finite");
        }
        if self.batch_size == 0 || self.patience == 0 || self.eval_latent_samples == 0 {
            return fail("batch_size, patience and eval_latent_samples must be at least 1");
        }
        let (lo, hi) = (self.context_fraction_min, self.context_fraction_max);
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return fail("context fractions must satisfy 0 <= min <= max <= 1");
        }
        Ok(())
    }

    /// Keys are prefixed with `train.`.
    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new();
        let mut put = |k: &str, v: String| {
            kv.insert(format!("train.{k}"), v);
        };
        put("learning_rate", format!("{:e}", self.learning_rate));
        put("batch_size", self.batch_size.to_string());
        put("patience", self.patience.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("seed", self.seed.to_string());
        put("log_space_outputs", self.log_space_outputs.to_string());
        put("eval_latent_samples", self.eval_latent_samples.to_string());
        put("context_fraction_min", format!("{:e}", self.context_fraction_min));
        put("context_fraction_max", format!("{:e}", self.context_fraction_max));
        kv
    }

    pub fn from_kv(kv: &Kv) -> Result<Self> {
        let r = Reader::new(kv, "train config");
        let cfg = TrainConfig {
            learning_rate: r.parse("train.learning_rate")?,
            batch_size: r.parse("train.batch_size")?,
            patience: r.parse("train.patience")?,
            max_epochs: r.parse("train.max_epochs")?,
            seed: r.parse("train.seed")?,
            log_space_outputs: r.parse("train.log_space_outputs")?,
            eval_latent_samples: r.parse("train.eval_latent_samples")?,
            context_fraction_min: r.parse("train.context_fraction_min")?,
            context_fraction_max: r.parse("train.context_fraction_max")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Model and training settings as one flat record.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub np: NpConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Model keys under `np.`, training keys under `train.`.
    pub fn to_kv(&self) -> Kv {
        let mut kv: Kv = self.np.to_kv().into_iter().map(|(k, v)| (format!("np.{k}"), v)).collect();
        kv.extend(self.train.to_kv());
        kv
    }

    /// Rejects keys that belong to neither section.
    pub fn from_kv(kv: &Kv) -> Result<Self> {
        let np_kv: Kv = kv.iter().filter_map(|(k, v)| k.strip_prefix("np.").map(|k| (k.to_string(), v.clone()))).collect();
        let cfg = ExperimentConfig { np: NpConfig::from_kv(&np_kv)?, train: TrainConfig::from_kv(kv)? };
        let known = cfg.to_kv();
        if let Some(k) = kv.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::format(format!("unknown config key `{k}`")));
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        kv::to_text(&self.to_kv())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&kv::from_text(text)?)
    }

    pub fn digest(&self) -> String {
        kv::digest(&self.to_kv())
    }
}

/// Provenance hash carried by every experiment output.
pub fn config_digest(np: &NpConfig, train: &TrainConfig) -> String {
    ExperimentConfig { np: np.clone(), train: train.clone() }.digest()
}
