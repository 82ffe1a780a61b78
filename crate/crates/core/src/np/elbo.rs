//! Training objectives for the NP family.

use rand::Rng;

use super::batch::{BatchMatrices, ContextTargetBatch, Fidelity};
use super::config::{NpConfig, Variant};
use super::forward::{aggregate, decode_rows, encode_points, encoder_input, mean_of, mean_std_summary};
use super::model::{BoundLevel, MfhnpModel};
use crate::error::{Error, Result};
use crate::gaussian::{kl_taped, standard_normal_vec, TapedGaussian};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Standard-normal draws consumed by the reparameterized samples.
///
/// `low` holds one `d_z` vector per `z_l` sample. `high` holds one per `z_h`
/// sample; for MC the draw for `(k, s)` sits at index `k * S + s`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentNoise<T> {
    pub low: Vec<Vec<T>>,
    pub high: Vec<Vec<T>>,
}

impl<T: Scalar> LatentNoise<T> {
    /// Counts required by `cfg`: `(low, high)`.
    pub fn counts(cfg: &NpConfig) -> (usize, usize) {
        let (k, s) = (cfg.k_samples, cfg.s_samples);
        match cfg.variant {
            Variant::Sf | Variant::Mf => (0, s),
            Variant::HnpMc => (k, k * s),
            Variant::HnpAs => (s, s),
            Variant::HnpMean | Variant::HnpMeanStd => (k, s),
        }
    }

    /// Draws all low vectors first, then all high vectors.
    pub fn draw<R: Rng + ?Sized>(cfg: &NpConfig, rng: &mut R) -> Self {
        let (nl, nh) = Self::counts(cfg);
        let low = (0..nl).map(|_| standard_normal_vec(rng, cfg.d_z)).collect();
        let high = (0..nh).map(|_| standard_normal_vec(rng, cfg.d_z)).collect();
        LatentNoise { low, high }
    }

    /// All-zero noise: every sample sits at the posterior mean.
    pub fn zeros(cfg: &NpConfig) -> Self {
        let (nl, nh) = Self::counts(cfg);
        LatentNoise { low: vec![vec![T::zero(); cfg.d_z]; nl], high: vec![vec![T::zero(); cfg.d_z]; nh] }
    }

    fn check(&self, cfg: &NpConfig) -> Result<()> {
        let (nl, nh) = Self::counts(cfg);
        if self.low.len() != nl {
            return Err(Error::LengthMismatch { op: "low noise draws", expected: nl, actual: self.low.len() });
        }
        if self.high.len() != nh {
            return Err(Error::LengthMismatch { op: "high noise draws", expected: nh, actual: self.high.len() });
        }
        for v in self.low.iter().chain(&self.high) {
            if v.len() != cfg.d_z {
                return Err(Error::LengthMismatch { op: "noise vector", expected: cfg.d_z, actual: v.len() });
            }
        }
        Ok(())
    }
}

/// Relative weight of each level's ELBO term in the loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelWeights<T> {
    pub high: T,
    pub low: T,
}

impl<T: Scalar> Default for LevelWeights<T> {
    fn default() -> Self {
        LevelWeights { high: T::one(), low: T::one() }
    }
}

/// Terms of the objective. Log-likelihoods are sample averages summed over
/// targets and output dimensions; KLs are sample averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboBreakdown<T> {
    pub high_loglik: T,
    pub high_kl: T,
    pub low_loglik: T,
    pub low_kl: T,
    /// `-Σ_level w (loglik - kl) / n_targets`.
    pub loss: T,
}

struct TapedTerms {
    high_loglik: Var,
    high_kl: Var,
    low: Option<(Var, Var)>,
    loss: Var,
}

fn noise_tensor<T: Scalar>(v: &[T]) -> Tensor<T> {
    Tensor::raw(vec![1, v.len()], v.to_vec())
}

struct LevelInputs {
    x: Var,
    y: Var,
    y_low: Option<Var>,
    x_t: Var,
    y_t: Var,
    y_low_t: Option<Var>,
    context: Vec<usize>,
    all: Vec<usize>,
    n_target: usize,
}

fn level_inputs<T: Scalar>(tape: &mut Tape<T>, m: BatchMatrices<T>) -> Result<LevelInputs> {
    if m.n_target == 0 {
        return Err(Error::Empty("a training batch needs at least one target point"));
    }
    let (context, all, targets) = (m.context_rows(), m.all_rows(), m.target_rows());
    let x = tape.leaf(m.x);
    let y = tape.leaf(m.y);
    let y_low = m.y_low.map(|t| tape.leaf(t));
    let x_t = tape.gather_rows(x, &targets)?;
    let y_t = tape.gather_rows(y, &targets)?;
    let y_low_t = match y_low {
        Some(v) => Some(tape.gather_rows(v, &targets)?),
        None => None,
    };
    Ok(LevelInputs { x, y, y_low, x_t, y_t, y_low_t, context, all, n_target: m.n_target })
}

/// `(q(z|context), q(z|context ∪ target))` for one level.
fn posteriors<T: Scalar>(
    tape: &mut Tape<T>,
    level: &BoundLevel,
    cfg: &NpConfig,
    high: bool,
    inp: &LevelInputs,
    summary: Option<Var>,
) -> Result<(TapedGaussian, TapedGaussian)> {
    let input = encoder_input(tape, cfg, high, inp.x, inp.y, inp.y_low, summary)?;
    let enc = encode_points(tape, level, cfg, input)?;
    let q_c = aggregate(tape, level, cfg, &enc, &inp.context)?;
    let q_ct = aggregate(tape, level, cfg, &enc, &inp.all)?;
    Ok((q_c, q_ct))
}

fn target_loglik<T: Scalar>(
    tape: &mut Tape<T>,
    level: &BoundLevel,
    d_y: usize,
    inp: &LevelInputs,
    z: Var,
) -> Result<Var> {
    let pred = decode_rows(tape, level, d_y, z, inp.x_t, inp.y_low_t)?;
    pred.log_prob(tape, inp.y_t)
}

/// Builds the full objective on `tape`.
fn build<T: Scalar>(
    tape: &mut Tape<T>,
    model: &MfhnpModel<T>,
    low: Option<&ContextTargetBatch<T>>,
    high: &ContextTargetBatch<T>,
    noise: &LatentNoise<T>,
    weights: LevelWeights<T>,
) -> Result<(TapedTerms, Vec<Var>)> {
    let cfg = model.config();
    noise.check(cfg)?;
    high.expect_fidelity(Fidelity::High)?;
    let bound = model.bind(tape);
    let params = bound.vars();
    let paired = (cfg.variant == Variant::Mf).then_some(cfg.d_y_low);
    let hm = high.matrices(cfg.d_x_high, cfg.d_y_high, paired)?;

    // Low level: posteriors, z_l draws and the low ELBO term.
    let mut z_low = Vec::new();
    let mut q_low_ct = None;
    let mut low_terms = None;
    let mut low_n = 0;
    if cfg.variant.is_hierarchical() {
        let lb = low.ok_or_else(|| Error::invalid("hierarchical variants need a low-fidelity batch"))?;
        lb.expect_fidelity(Fidelity::Low)?;
        let lm = lb.matrices(cfg.d_x_low, cfg.d_y_low, None)?;
        let level = bound.level(Fidelity::Low)?;
        let inp = level_inputs(tape, lm)?;
        low_n = inp.n_target;
        let (q_c, q_ct) = posteriors(tape, level, cfg, false, &inp, None)?;
        let mut lls = Vec::with_capacity(noise.low.len());
        for eps in &noise.low {
            let z = q_ct.rsample(tape, noise_tensor(eps))?;
            lls.push(target_loglik(tape, level, cfg.d_y_low, &inp, z)?);
            z_low.push(z);
        }
        let ll = mean_of(tape, &lls)?;
        let kl = kl_taped(tape, &q_ct, &q_c)?;
        low_terms = Some((ll, kl));
        q_low_ct = Some(q_ct);
    } else if low.is_some() {
        return Err(Error::invalid("single-level variants take no low-fidelity batch"));
    }

    // High level.
    let level = bound.level(Fidelity::High)?;
    let inp = level_inputs(tape, hm)?;
    let d_y = cfg.d_y_high;
    let s_count = cfg.s_samples;
    let mut lls = Vec::new();
    let mut kls = Vec::new();
    match cfg.variant {
        Variant::Sf | Variant::Mf | Variant::HnpMean | Variant::HnpMeanStd => {
            let summary = match (cfg.variant, &q_low_ct) {
                (Variant::HnpMean, Some(q)) => Some(q.mean),
                (Variant::HnpMeanStd, Some(q)) => Some(mean_std_summary(tape, q)?),
                _ => None,
            };
            let (q_c, q_ct) = posteriors(tape, level, cfg, true, &inp, summary)?;
            for eps in &noise.high {
                let z = q_ct.rsample(tape, noise_tensor(eps))?;
                lls.push(target_loglik(tape, level, d_y, &inp, z)?);
            }
            kls.push(kl_taped(tape, &q_ct, &q_c)?);
        }
        Variant::HnpAs => {
            for (s, eps) in noise.high.iter().enumerate() {
                let (q_c, q_ct) = posteriors(tape, level, cfg, true, &inp, Some(z_low[s]))?;
                let z = q_ct.rsample(tape, noise_tensor(eps))?;
                lls.push(target_loglik(tape, level, d_y, &inp, z)?);
                kls.push(kl_taped(tape, &q_ct, &q_c)?);
            }
        }
        Variant::HnpMc => {
            let mut per_k = Vec::with_capacity(z_low.len());
            for (k, &zl) in z_low.iter().enumerate() {
                let (q_c, q_ct) = posteriors(tape, level, cfg, true, &inp, Some(zl))?;
                let mut inner = Vec::with_capacity(s_count);
                for eps in &noise.high[k * s_count..(k + 1) * s_count] {
                    let z = q_ct.rsample(tape, noise_tensor(eps))?;
                    inner.push(target_loglik(tape, level, d_y, &inp, z)?);
                }
                per_k.push(mean_of(tape, &inner)?);
                kls.push(kl_taped(tape, &q_ct, &q_c)?);
            }
            lls = per_k;
        }
    }
    let high_loglik = mean_of(tape, &lls)?;
    let high_kl = mean_of(tape, &kls)?;

    let high_elbo = tape.sub(high_loglik, high_kl)?;
    let mut objective = tape.scale(high_elbo, weights.high / T::of(inp.n_target as f64))?;
    if let Some((ll, kl)) = low_terms {
        let low_elbo = tape.sub(ll, kl)?;
        let low_term = tape.scale(low_elbo, weights.low / T::of(low_n as f64))?;
        objective = tape.add(objective, low_term)?;
    }
    let loss = tape.neg(objective)?;
    Ok((TapedTerms { high_loglik, high_kl, low: low_terms, loss }, params))
}

fn breakdown<T: Scalar>(tape: &Tape<T>, t: &TapedTerms) -> Result<ElboBreakdown<T>> {
    let item = |v: Var| -> Result<T> { tape.value(v)?.item() };
    let (low_loglik, low_kl) = match t.low {
        Some((ll, kl)) => (item(ll)?, item(kl)?),
        None => (T::zero(), T::zero()),
    };
    Ok(ElboBreakdown { high_loglik: item(t.high_loglik)?, high_kl: item(t.high_kl)?, low_loglik, low_kl, loss: item(t.loss)? })
}

/// Objective for any variant; `low` must be present exactly for the hierarchical ones.
pub fn model_elbo<T: Scalar>(
    model: &MfhnpModel<T>,
    low: Option<&ContextTargetBatch<T>>,
    high: &ContextTargetBatch<T>,
    noise: &LatentNoise<T>,
) -> Result<ElboBreakdown<T>> {
    let mut tape = Tape::new();
    let (terms, _) = build(&mut tape, model, low, high, noise, LevelWeights::default())?;
    breakdown(&tape, &terms)
}

fn expect_variant<T: Scalar>(model: &MfhnpModel<T>, ok: bool, name: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} called on a {} model", model.config().variant.tag())))
    }
}

/// Single-fidelity objective over one high-fidelity batch.
pub fn elbo_sfnp<T: Scalar>(model: &MfhnpModel<T>, batch: &ContextTargetBatch<T>, noise: &LatentNoise<T>) -> Result<ElboBreakdown<T>> {
    expect_variant(model, model.config().variant == Variant::Sf, "elbo_sfnp")?;
    model_elbo(model, None, batch, noise)
}

/// Paired multi-fidelity objective; every point must carry `y_low`.
pub fn elbo_mfnp<T: Scalar>(model: &MfhnpModel<T>, batch: &ContextTargetBatch<T>, noise: &LatentNoise<T>) -> Result<ElboBreakdown<T>> {
    expect_variant(model, model.config().variant == Variant::Mf, "elbo_mfnp")?;
    model_elbo(model, None, batch, noise)
}

/// Hierarchical objective over one batch per level.
pub fn elbo_mfhnp<T: Scalar>(
    model: &MfhnpModel<T>,
    low: &ContextTargetBatch<T>,
    high: &ContextTargetBatch<T>,
    noise: &LatentNoise<T>,
) -> Result<ElboBreakdown<T>> {
    expect_variant(model, model.config().variant.is_hierarchical(), "elbo_mfhnp")?;
    model_elbo(model, Some(low), high, noise)
}

/// Loss terms plus the gradient of `loss` w.r.t. [`MfhnpModel::flat_params`].
pub fn loss_and_gradient<T: Scalar>(
    model: &MfhnpModel<T>,
    low: Option<&ContextTargetBatch<T>>,
    high: &ContextTargetBatch<T>,
    noise: &LatentNoise<T>,
    weights: LevelWeights<T>,
) -> Result<(ElboBreakdown<T>, Vec<T>)> {
    let mut tape = Tape::new();
    let (terms, params) = build(&mut tape, model, low, high, noise, weights)?;
    let out = breakdown(&tape, &terms)?;
    let grads = tape.backward(terms.loss)?;
    let mut flat = Vec::with_capacity(model.param_count());
    for p in params {
        flat.extend_from_slice(grads.wrt(p)?.data());
    }
    Ok((out, flat))
}
