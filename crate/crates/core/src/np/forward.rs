//! Tape-level building blocks shared by the objectives and by prediction.

use super::config::{NpConfig, Variant};
use super::model::BoundLevel;
use crate::aggregation::{bayesian_aggregate_taped, mean_aggregate_taped, Aggregation};
use crate::error::{Error, Result};
use crate::gaussian::{floored_softplus, TapedGaussian};
use crate::numerics::{Tape, Var};
use crate::scalar::Scalar;

/// Per-point encoder output for a set of rows.
pub(crate) struct Encoded {
    r: Var,
    obs_variance: Option<Var>,
}

pub(crate) fn encode_points<T: Scalar>(tape: &mut Tape<T>, level: &BoundLevel, cfg: &NpConfig, input: Var) -> Result<Encoded> {
    let out = level.encoder.forward(tape, input)?;
    match cfg.aggregation {
        Aggregation::Mean => Ok(Encoded { r: out, obs_variance: None }),
        Aggregation::Bayesian => {
            let r = tape.slice_cols(out, 0, cfg.d_z)?;
            let raw = tape.slice_cols(out, cfg.d_z, 2 * cfg.d_z)?;
            let obs_variance = Some(floored_softplus(tape, raw)?);
            Ok(Encoded { r, obs_variance })
        }
    }
}

/// `q(z | rows in subset)` as a `[1, d_z]` distribution.
pub(crate) fn aggregate<T: Scalar>(
    tape: &mut Tape<T>,
    level: &BoundLevel,
    cfg: &NpConfig,
    enc: &Encoded,
    subset: &[usize],
) -> Result<TapedGaussian> {
    match cfg.aggregation {
        Aggregation::Mean => {
            let head = level.latent_head.as_ref().ok_or_else(|| Error::invalid("MA level without a latent head"))?;
            mean_aggregate_taped(tape, enc.r, subset, head, cfg.d_z)
        }
        Aggregation::Bayesian => {
            let prior = level.prior(tape)?.ok_or_else(|| Error::invalid("BA level without a prior"))?;
            let v = enc.obs_variance.ok_or_else(|| Error::invalid("BA encoding without variances"))?;
            bayesian_aggregate_taped(tape, &prior, enc.r, v, subset)
        }
    }
}

/// Encoder input rows: `x ∥ y` at the low level; at the high level
/// `x ∥ y` (SF), `x ∥ y_low ∥ y` (MF) or `x ∥ y ∥ summary` (hierarchical).
pub(crate) fn encoder_input<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &NpConfig,
    high: bool,
    x: Var,
    y: Var,
    y_low: Option<Var>,
    summary: Option<Var>,
) -> Result<Var> {
    let n = tape.shape(x)?[0];
    let expected = cfg.variant.summary_width(cfg.d_z);
    let summary_width = match summary {
        Some(s) => tape.value(s)?.numel(),
        None => 0,
    };
    if high && summary_width != expected {
        return Err(Error::LengthMismatch { op: "z_l summary", expected, actual: summary_width });
    }
    let mut parts = vec![x];
    match (high, cfg.variant) {
        (true, Variant::Mf) => {
            parts.push(y_low.ok_or(Error::Unpaired { index: 0 })?);
            parts.push(y);
        }
        (true, v) if v.is_hierarchical() => {
            parts.push(y);
            let s = summary.expect("width checked above");
            parts.push(tape.broadcast_rows(s, n)?);
        }
        _ => parts.push(y),
    }
    tape.concat_cols(&parts)
}

/// `p(y | z, x)` for every row of `x`, as an `[m, d_y]` distribution.
pub(crate) fn decode_rows<T: Scalar>(
    tape: &mut Tape<T>,
    level: &BoundLevel,
    d_y: usize,
    z: Var,
    x: Var,
    y_low: Option<Var>,
) -> Result<TapedGaussian> {
    let m = tape.shape(x)?[0];
    let zb = tape.broadcast_rows(z, m)?;
    let mut parts = vec![zb, x];
    parts.extend(y_low);
    let input = tape.concat_cols(&parts)?;
    let out = level.decoder.forward(tape, input)?;
    TapedGaussian::from_head(tape, out, d_y)
}

/// Arithmetic mean of scalar vars, summed in slice order.
pub(crate) fn mean_of<T: Scalar>(tape: &mut Tape<T>, vars: &[Var]) -> Result<Var> {
    let (&first, rest) = vars.split_first().ok_or(Error::Empty("mean of no terms"))?;
    let mut acc = first;
    for &v in rest {
        acc = tape.add(acc, v)?;
    }
    tape.scale(acc, T::one() / T::of(vars.len() as f64))
}

/// `(μ, σ)` of a latent as one `[1, 2 d_z]` row.
pub(crate) fn mean_std_summary<T: Scalar>(tape: &mut Tape<T>, q: &TapedGaussian) -> Result<Var> {
    let sd = tape.sqrt(q.variance)?;
    tape.concat_cols(&[q.mean, sd])
}
