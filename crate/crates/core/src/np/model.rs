use rand::Rng;

use super::config::NpConfig;
use super::Fidelity;
use crate::aggregation::{Aggregation, BaPrior};
use crate::error::{Error, Result};
use crate::gaussian::{floored_softplus, TapedGaussian, VARIANCE_FLOOR};
use crate::numerics::{BoundMlp, Checkpoint, Mlp, Tape, Tensor, Var};
use crate::scalar::{softplus, softplus_inverse, Scalar};

/// Encoder, aggregation parameters and decoder for one fidelity level.
///
/// Under BA the encoder emits `2 d_z` values per point: the latent observation
/// `r_n` followed by the raw observation variance. Under MA it emits `d_r`
/// values and `latent_head` maps the averaged representation to `2 d_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelNetworks<T> {
    pub encoder: Mlp<T>,
    pub latent_head: Option<Mlp<T>>,
    /// BA prior mean, `[1, d_z]`.
    pub prior_mean: Option<Tensor<T>>,
    /// BA prior variance before `softplus + floor`, `[1, d_z]`.
    pub prior_raw_variance: Option<Tensor<T>>,
    pub decoder: Mlp<T>,
}

/// Parameters of one level recorded on a tape.
pub(crate) struct BoundLevel {
    pub encoder: BoundMlp,
    pub latent_head: Option<BoundMlp>,
    pub prior_mean: Option<Var>,
    pub prior_raw_variance: Option<Var>,
    pub decoder: BoundMlp,
}

pub(crate) struct BoundModel {
    pub low: Option<BoundLevel>,
    pub high: BoundLevel,
}

/// Any member of the NP family; SF-NP and MF-NP carry no low-level networks.
#[derive(Clone, Debug, PartialEq)]
pub struct MfhnpModel<T> {
    config: NpConfig,
    low: Option<LevelNetworks<T>>,
    high: LevelNetworks<T>,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

impl<T: Scalar> LevelNetworks<T> {
    fn new<R: Rng + ?Sized>(cfg: &NpConfig, high: bool, rng: &mut R) -> Result<Self> {
        let d_y = if high { cfg.d_y_high } else { cfg.d_y_low };
        let encoder = Mlp::new(&dims(cfg.encoder_input(high), &cfg.encoder_hidden, cfg.encoder_output()), cfg.activation, rng)?;
        let (latent_head, prior_mean, prior_raw_variance) = match cfg.aggregation {
            Aggregation::Mean => (Some(Mlp::new(&[cfg.d_r, cfg.d_r, 2 * cfg.d_z], cfg.activation, rng)?), None, None),
            Aggregation::Bayesian => {
                let raw = softplus_inverse(T::one() - T::of(VARIANCE_FLOOR));
                (None, Some(Tensor::zeros(&[1, cfg.d_z])), Some(Tensor::matrix(1, cfg.d_z, vec![raw; cfg.d_z])?))
            }
        };
        let decoder = Mlp::new(&dims(cfg.decoder_input(high), &cfg.decoder_hidden, 2 * d_y), cfg.activation, rng)?;
        Ok(LevelNetworks { encoder, latent_head, prior_mean, prior_raw_variance, decoder })
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.encoder.params();
        if let Some(h) = &self.latent_head {
            p.extend(h.params());
        }
        p.extend(self.prior_mean.iter());
        p.extend(self.prior_raw_variance.iter());
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.encoder.params_mut();
        if let Some(h) = &mut self.latent_head {
            p.extend(h.params_mut());
        }
        p.extend(self.prior_mean.iter_mut());
        p.extend(self.prior_raw_variance.iter_mut());
        p.extend(self.decoder.params_mut());
        p
    }

    fn bind(&self, tape: &mut Tape<T>) -> BoundLevel {
        BoundLevel {
            encoder: self.encoder.bind(tape),
            latent_head: self.latent_head.as_ref().map(|h| h.bind(tape)),
            prior_mean: self.prior_mean.as_ref().map(|t| tape.leaf(t.clone())),
            prior_raw_variance: self.prior_raw_variance.as_ref().map(|t| tape.leaf(t.clone())),
            decoder: self.decoder.bind(tape),
        }
    }

    /// The BA prior in natural parameters, if this level uses BA.
    pub fn ba_prior(&self) -> Option<BaPrior<T>> {
        let mean = self.prior_mean.as_ref()?;
        let raw = self.prior_raw_variance.as_ref()?;
        let floor = T::of(VARIANCE_FLOOR);
        Some(BaPrior {
            mean0: mean.data().to_vec(),
            variance0: raw.data().iter().map(|&r| softplus(r) + floor).collect(),
            learnable: true,
        })
    }

    fn save_into(&self, prefix: &str, ckpt: &mut Checkpoint<T>) {
        self.encoder.save_into(&format!("{prefix}.encoder"), ckpt);
        if let Some(h) = &self.latent_head {
            h.save_into(&format!("{prefix}.latent_head"), ckpt);
        }
        if let (Some(m), Some(v)) = (&self.prior_mean, &self.prior_raw_variance) {
            ckpt.push_tensor(format!("{prefix}.prior_mean"), m.clone());
            ckpt.push_tensor(format!("{prefix}.prior_raw_variance"), v.clone());
        }
        self.decoder.save_into(&format!("{prefix}.decoder"), ckpt);
    }

    fn load_from(prefix: &str, ckpt: &Checkpoint<T>, expected: &Self) -> Result<Self> {
        let encoder = Mlp::load_from(&format!("{prefix}.encoder"), ckpt)?;
        let latent_head = match &expected.latent_head {
            Some(_) => Some(Mlp::load_from(&format!("{prefix}.latent_head"), ckpt)?),
            None => None,
        };
        let (prior_mean, prior_raw_variance) = match &expected.prior_mean {
            Some(_) => (
                Some(ckpt.tensor(&format!("{prefix}.prior_mean"))?.clone()),
                Some(ckpt.tensor(&format!("{prefix}.prior_raw_variance"))?.clone()),
            ),
            None => (None, None),
        };
        let decoder = Mlp::load_from(&format!("{prefix}.decoder"), ckpt)?;
        let level = LevelNetworks { encoder, latent_head, prior_mean, prior_raw_variance, decoder };
        let shapes = |l: &Self| l.params().iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>();
        if shapes(&level) != shapes(expected)
            || level.encoder.layer_dims() != expected.encoder.layer_dims()
            || level.decoder.layer_dims() != expected.decoder.layer_dims()
        {
            return Err(Error::format(format!("{prefix}: checkpoint shapes do not match the configuration")));
        }
        Ok(level)
    }
}

impl BoundLevel {
    fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars();
        if let Some(h) = &self.latent_head {
            v.extend(h.vars());
        }
        v.extend(self.prior_mean.iter());
        v.extend(self.prior_raw_variance.iter());
        v.extend(self.decoder.vars());
        v
    }

    pub fn prior<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Option<TapedGaussian>> {
        match (self.prior_mean, self.prior_raw_variance) {
            (Some(mean), Some(raw)) => Ok(Some(TapedGaussian { mean, variance: floored_softplus(tape, raw)? })),
            _ => Ok(None),
        }
    }
}

impl BoundModel {
    /// Leaves in the order of [`MfhnpModel::params`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.low.as_ref().map(BoundLevel::vars).unwrap_or_default();
        v.extend(self.high.vars());
        v
    }

    pub fn level(&self, f: Fidelity) -> Result<&BoundLevel> {
        match f {
            Fidelity::High => Ok(&self.high),
            Fidelity::Low => self.low.as_ref().ok_or_else(|| Error::invalid("model has no low-fidelity networks")),
        }
    }
}

impl<T: Scalar> MfhnpModel<T> {
    pub fn new<R: Rng + ?Sized>(config: NpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let low = if config.variant.is_hierarchical() { Some(LevelNetworks::new(&config, false, rng)?) } else { None };
        let high = LevelNetworks::new(&config, true, rng)?;
        Ok(MfhnpModel { config, low, high })
    }

    pub fn config(&self) -> &NpConfig {
        &self.config
    }

    pub fn level(&self, f: Fidelity) -> Result<&LevelNetworks<T>> {
        match f {
            Fidelity::High => Ok(&self.high),
            Fidelity::Low => self.low.as_ref().ok_or_else(|| Error::invalid("model has no low-fidelity networks")),
        }
    }

    pub fn level_mut(&mut self, f: Fidelity) -> Result<&mut LevelNetworks<T>> {
        match f {
            Fidelity::High => Ok(&mut self.high),
            Fidelity::Low => self.low.as_mut().ok_or_else(|| Error::invalid("model has no low-fidelity networks")),
        }
    }

    /// Low-level parameters first, then high; each level in the order
    /// encoder, latent head, prior mean, prior variance, decoder.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.low.as_ref().map(LevelNetworks::params).unwrap_or_default();
        p.extend(self.high.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.low.as_mut().map(LevelNetworks::params_mut).unwrap_or_default();
        p.extend(self.high.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::LengthMismatch { op: "set_flat_params", expected: total, actual: flat.len() });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.numel();
            *p = Tensor::new(p.shape().to_vec(), flat[offset..offset + n].to_vec())?;
            offset += n;
        }
        Ok(())
    }

    pub(crate) fn bind(&self, tape: &mut Tape<T>) -> BoundModel {
        BoundModel { low: self.low.as_ref().map(|l| l.bind(tape)), high: self.high.bind(tape) }
    }

    /// Checkpoint container with the configuration in the header.
    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ckpt = Checkpoint::new();
        for (k, v) in self.config.to_kv() {
            ckpt.set_header(format!("np.{k}"), v);
        }
        if let Some(low) = &self.low {
            low.save_into("low", &mut ckpt);
        }
        self.high.save_into("high", &mut ckpt);
        ckpt
    }

    /// Rebuilds a model, checking every tensor shape against the header configuration.
    pub fn from_checkpoint(ckpt: &Checkpoint<T>) -> Result<Self> {
        let kv = ckpt
            .headers()
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("np.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let config = NpConfig::from_kv(&kv)?;
        // A throwaway instance supplies the expected shapes.
        let template = MfhnpModel::<T>::new(config.clone(), &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        let low = match &template.low {
            Some(t) => Some(LevelNetworks::load_from("low", ckpt, t)?),
            None => None,
        };
        let high = LevelNetworks::load_from("high", ckpt, &template.high)?;
        Ok(MfhnpModel { config, low, high })
    }
}
