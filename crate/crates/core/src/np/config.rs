use std::collections::BTreeMap;

use crate::aggregation::Aggregation;
use crate::error::{Error, Result};
use crate::numerics::Activation;

/// Which member of the neural-process family a model implements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Single-fidelity NP on high-fidelity data only.
    Sf,
    /// Decoder conditioned on the paired low-fidelity output.
    Mf,
    /// Hierarchical, `z_h` conditioned on an ancestral sample of `z_l`.
    HnpAs,
    /// Hierarchical, `z_h` conditioned on the mean of `q(z_l)`.
    HnpMean,
    /// Hierarchical, `z_h` conditioned on mean and standard deviation of `q(z_l)`.
    HnpMeanStd,
    /// Hierarchical, nested Monte Carlo over `z_l` then `z_h`.
    HnpMc,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Sf, Variant::Mf, Variant::HnpAs, Variant::HnpMean, Variant::HnpMeanStd, Variant::HnpMc];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Sf => "sf",
            Variant::Mf => "mf",
            Variant::HnpAs => "hnp-as",
            Variant::HnpMean => "hnp-mean",
            Variant::HnpMeanStd => "hnp-meanstd",
            Variant::HnpMc => "hnp-mc",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == tag.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown variant `{tag}`")))
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Variant::HnpAs | Variant::HnpMean | Variant::HnpMeanStd | Variant::HnpMc)
    }

    /// Width of the `z_l` summary appended to every high-fidelity context point.
    pub fn summary_width(self, d_z: usize) -> usize {
        match self {
            Variant::Sf | Variant::Mf => 0,
            Variant::HnpMeanStd => 2 * d_z,
            Variant::HnpAs | Variant::HnpMean | Variant::HnpMc => d_z,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpConfig {
    pub variant: Variant,
    pub aggregation: Aggregation,
    pub d_x_low: usize,
    pub d_y_low: usize,
    pub d_x_high: usize,
    pub d_y_high: usize,
    pub d_z: usize,
    pub d_r: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    /// Draws of `z_l` (K).
    pub k_samples: usize,
    /// Draws of `z_h` (S).
    pub s_samples: usize,
}

impl NpConfig {
    /// Default architecture: encoder 2x128, decoder 3x128, 32-wide latents.
    pub fn new(variant: Variant, aggregation: Aggregation, d_x_low: usize, d_y_low: usize, d_x_high: usize, d_y_high: usize) -> Self {
        let (k, s) = match variant {
            Variant::HnpMc => (4, 4),
            _ => (8, 8),
        };
        NpConfig {
            variant,
            aggregation,
            d_x_low,
            d_y_low,
            d_x_high,
            d_y_high,
            d_z: 32,
            d_r: 32,
            encoder_hidden: vec![128, 128],
            decoder_hidden: vec![128, 128, 128],
            activation: Activation::Relu,
            k_samples: k,
            s_samples: s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("NpConfig: {m}")));
        if self.d_z == 0 || self.d_r == 0 {
            return fail("d_z and d_r must be at least 1");
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&w| w == 0) {
            return fail("hidden widths must be at least 1");
        }
        if self.k_samples == 0 || self.s_samples == 0 {
            return fail("K and S must be at least 1");
        }
        if self.d_x_high == 0 || self.d_y_high == 0 {
            return fail("high-fidelity widths must be at least 1");
        }
        if self.variant.is_hierarchical() && (self.d_x_low == 0 || self.d_y_low == 0) {
            return fail("hierarchical variants need low-fidelity widths");
        }
        if self.variant == Variant::Mf && self.d_y_low == 0 {
            return fail("MF-NP needs the low-fidelity output width");
        }
        if self.variant == Variant::HnpAs && self.k_samples != self.s_samples {
            return fail("ancestral sampling couples z_l and z_h draws, so K must equal S");
        }
        Ok(())
    }

    pub(crate) fn encoder_input(&self, high: bool) -> usize {
        match (high, self.variant) {
            (false, _) => self.d_x_low + self.d_y_low,
            (true, Variant::Mf) => self.d_x_high + self.d_y_low + self.d_y_high,
            (true, v) => self.d_x_high + self.d_y_high + v.summary_width(self.d_z),
        }
    }

    pub(crate) fn decoder_input(&self, high: bool) -> usize {
        match (high, self.variant) {
            (false, _) => self.d_z + self.d_x_low,
            (true, Variant::Mf) => self.d_z + self.d_x_high + self.d_y_low,
            (true, _) => self.d_z + self.d_x_high,
        }
    }

    pub(crate) fn encoder_output(&self) -> usize {
        match self.aggregation {
            Aggregation::Mean => self.d_r,
            Aggregation::Bayesian => 2 * self.d_z,
        }
    }

    /// Flat `key -> value` view, keys sorted.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let list = |v: &[usize]| v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        let mut kv = BTreeMap::new();
        kv.insert("variant".into(), self.variant.tag().into());
        kv.insert("aggregation".into(), self.aggregation.tag().into());
        kv.insert("d_x_low".into(), self.d_x_low.to_string());
        kv.insert("d_y_low".into(), self.d_y_low.to_string());
        kv.insert("d_x_high".into(), self.d_x_high.to_string());
        kv.insert("d_y_high".into(), self.d_y_high.to_string());
        kv.insert("d_z".into(), self.d_z.to_string());
        kv.insert("d_r".into(), self.d_r.to_string());
        kv.insert("encoder_hidden".into(), list(&self.encoder_hidden));
        kv.insert("decoder_hidden".into(), list(&self.decoder_hidden));
        kv.insert("activation".into(), self.activation.tag().into());
        kv.insert("k_samples".into(), self.k_samples.to_string());
        kv.insert("s_samples".into(), self.s_samples.to_string());
        kv
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| Error::format(format!("missing `{k}`")));
        let num = |k: &str| -> Result<usize> { get(k)?.trim().parse().map_err(|_| Error::format(format!("`{k}` is not an integer"))) };
        let list = |k: &str| -> Result<Vec<usize>> {
            let s = get(k)?.trim();
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|w| w.trim().parse().map_err(|_| Error::format(format!("`{k}` is not an integer list"))))
                .collect()
        };
        let cfg = NpConfig {
            variant: Variant::from_tag(get("variant")?)?,
            aggregation: Aggregation::from_tag(get("aggregation")?)?,
            d_x_low: num("d_x_low")?,
            d_y_low: num("d_y_low")?,
            d_x_high: num("d_x_high")?,
            d_y_high: num("d_y_high")?,
            d_z: num("d_z")?,
            d_r: num("d_r")?,
            encoder_hidden: list("encoder_hidden")?,
            decoder_hidden: list("decoder_hidden")?,
            activation: Activation::from_tag(get("activation")?)?,
            k_samples: num("k_samples")?,
            s_samples: num("s_samples")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
