use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{config_digest, TrainConfig};
use super::data::{Prepared, TaskData};
use super::eval::score_prepared;
use crate::datasets::{ScenarioId, Split};
use crate::error::{Error, Result};
use crate::np::{loss_and_gradient, ContextTargetBatch, Fidelity, LatentNoise, LevelWeights, MfhnpModel, Point};
use crate::numerics::{adam_step, AdamState};
use crate::seeds::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's steps.
    pub train_loss: f64,
    pub val_nll: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub config_digest: String,
}

const HISTORY_TAG: &str = "mfhnp-history 1";

impl TrainHistory {
    pub fn best_val_nll(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_nll)
    }

    pub fn to_text(&self) -> String {
        let best = self.best_epoch.map_or("none".to_string(), |e| e.to_string());
        let mut s = format!("{HISTORY_TAG}\nconfig_digest {}\nbest_epoch {best}\nepoch,train_loss,val_nll\n", self.config_digest);
        for e in &self.epochs {
            writeln!(s, "{},{:.16e},{:.16e}", e.epoch, e.train_loss, e.val_nll).expect("writing to a String");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub struct TrainOutcome {
    pub model: MfhnpModel<f64>,
    pub history: TrainHistory,
}

/// Splits an ordered chunk into context and target. A single scenario serves as both.
fn context_target(chunk: Vec<Point<f64>>, fidelity: Fidelity, config: &TrainConfig, rng: &mut ChaCha8Rng) -> ContextTargetBatch<f64> {
    let n = chunk.len();
    if n == 1 {
        return ContextTargetBatch::new(fidelity, chunk.clone(), chunk);
    }
    let frac = rng.random_range(config.context_fraction_min..=config.context_fraction_max);
    let n_ctx = ((frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut context = chunk;
    let target = context.split_off(n_ctx);
    ContextTargetBatch::new(fidelity, context, target)
}

/// `step`-th chunk of `ids`, wrapping around when the list is shorter than the schedule.
fn chunk(ids: &[ScenarioId], step: usize, batch: usize) -> &[ScenarioId] {
    let n_chunks = ids.len().div_ceil(batch);
    let c = step % n_chunks;
    &ids[c * batch..((c + 1) * batch).min(ids.len())]
}

/// Adam on the variant's negated ELBO with early stopping on validation NLL.
///
/// Returns the parameters of the best validation epoch. `max_epochs == 0`
/// returns `model` unchanged.
pub fn train(mut model: MfhnpModel<f64>, data: &TaskData, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let cfg = model.config().clone();
    let prep = Prepared::new(&cfg, data, split, config.log_space_outputs)?;
    let digest = config_digest(&cfg, config);
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: None, config_digest: digest };
    if config.max_epochs == 0 {
        return Ok(TrainOutcome { model, history });
    }

    let hierarchical = cfg.variant.is_hierarchical();
    if split.high_train.is_empty() {
        return Err(Error::Empty("high-fidelity training scenarios"));
    }
    if hierarchical && split.low_train.is_empty() {
        return Err(Error::Empty("low-fidelity training scenarios"));
    }
    if split.val.is_empty() {
        return Err(Error::Empty("validation scenarios"));
    }
    // Surfaces pairing and lookup failures before any optimization.
    prep.eval_contexts()?;

    let mut rng = stream(derive_seed(config.seed, "train", 0), 0);
    let mut params = model.flat_params();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let mut best_params = params.clone();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut low_ids = if hierarchical { split.low_train.clone() } else { Vec::new() };
    let mut high_ids = split.high_train.clone();
    let bs = config.batch_size;

    for epoch in 0..config.max_epochs {
        low_ids.shuffle(&mut rng);
        high_ids.shuffle(&mut rng);
        let n_steps = low_ids.len().max(high_ids.len()).div_ceil(bs);
        let mut total = 0.0;
        for step in 0..n_steps {
            let low = if hierarchical {
                let pts = chunk(&low_ids, step, bs)
                    .iter()
                    .map(|&id| prep.low_point(id, rng.random_range(0..prep.n_samples_low())))
                    .collect::<Result<Vec<_>>>()?;
                Some(context_target(pts, Fidelity::Low, config, &mut rng))
            } else {
                None
            };
            let pts = chunk(&high_ids, step, bs)
                .iter()
                .enumerate()
                .map(|(i, &id)| prep.high_point(id, rng.random_range(0..prep.n_samples_high()), i))
                .collect::<Result<Vec<_>>>()?;
            let high = context_target(pts, Fidelity::High, config, &mut rng);
            let noise = LatentNoise::draw(&cfg, &mut rng);
            let diverged = |loss| Error::Diverged { epoch, step, loss };
            let (terms, grads) = loss_and_gradient(&model, low.as_ref(), &high, &noise, LevelWeights::default()).map_err(|e| match e {
                Error::NonFinite(_) => diverged(f64::NAN),
                e => e,
            })?;
            if !terms.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged(terms.loss));
            }
            adam_step(&mut params, &grads, &mut adam)?;
            model.set_flat_params(&params)?;
            total += terms.loss;
        }

        let scores = score_prepared(&model, data, &prep, &split.val, config, "evaluate").map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { epoch, step: n_steps, loss: f64::NAN },
            e => e,
        })?;
        let val_nll = scores.iter().map(|s| s.nll).sum::<f64>() / scores.len() as f64;
        history.epochs.push(EpochRecord { epoch, train_loss: total / n_steps as f64, val_nll });
        if val_nll < best {
            best = val_nll;
            best_params.clone_from(&params);
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.set_flat_params(&best_params)?;
    Ok(TrainOutcome { model, history })
}

/// Freshly initialized model for `config.seed`.
pub fn init_model(np: crate::np::NpConfig, config: &TrainConfig) -> Result<MfhnpModel<f64>> {
    MfhnpModel::new(np, &mut stream(derive_seed(config.seed, "init", 0), 0))
}
