//! Posterior encoding, decoding and predictive distributions.

use rand::Rng;

use super::batch::{ContextTargetBatch, Fidelity, Point};
use super::config::{NpConfig, Variant};
use super::forward::{aggregate, decode_rows, encode_points, encoder_input, mean_std_summary};
use super::model::{BoundLevel, MfhnpModel};
use crate::error::{Error, Result};
use crate::gaussian::{moment_match, standard_normal_vec, DiagGaussian, TapedGaussian};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// A prediction query: the high-fidelity input and, for MF-NP, its low-fidelity output.
#[derive(Clone, Debug, PartialEq)]
pub struct Query<T> {
    pub x: Vec<T>,
    pub y_low: Option<Vec<T>>,
}

impl<T> Query<T> {
    pub fn new(x: Vec<T>) -> Self {
        Query { x, y_low: None }
    }

    pub fn paired(x: Vec<T>, y_low: Vec<T>) -> Self {
        Query { x, y_low: Some(y_low) }
    }
}

fn vector_leaf<T: Scalar>(tape: &mut Tape<T>, v: &[T]) -> Var {
    tape.leaf(Tensor::raw(vec![1, v.len()], v.to_vec()))
}

/// `q(z | context)` for one level, on an existing tape.
fn context_posterior<T: Scalar>(
    tape: &mut Tape<T>,
    level: &BoundLevel,
    cfg: &NpConfig,
    fidelity: Fidelity,
    context: &[Point<T>],
    summary: Option<Var>,
) -> Result<TapedGaussian> {
    let high = fidelity == Fidelity::High;
    let (d_x, d_y) = if high { (cfg.d_x_high, cfg.d_y_high) } else { (cfg.d_x_low, cfg.d_y_low) };
    let paired = (high && cfg.variant == Variant::Mf).then_some(cfg.d_y_low);
    let m = ContextTargetBatch::new(fidelity, context.to_vec(), Vec::new()).matrices(d_x, d_y, paired)?;
    let rows = m.context_rows();
    let x = tape.leaf(m.x);
    let y = tape.leaf(m.y);
    let y_low = m.y_low.map(|t| tape.leaf(t));
    let input = encoder_input(tape, cfg, high, x, y, y_low, summary)?;
    let enc = encode_points(tape, level, cfg, input)?;
    aggregate(tape, level, cfg, &enc, &rows)
}

/// `q(z_l | D^c_l)` from the context points of a low-fidelity batch.
pub fn encode_low<T: Scalar>(model: &MfhnpModel<T>, batch: &ContextTargetBatch<T>) -> Result<DiagGaussian<T>> {
    batch.expect_fidelity(Fidelity::Low)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let q = context_posterior(&mut tape, bound.level(Fidelity::Low)?, model.config(), Fidelity::Low, &batch.context, None)?;
    q.value(&tape, 0)
}

/// `q(z_h | summary, D^c_h)` from the context points of a high-fidelity batch.
///
/// `summary` is a `z_l` draw (AS, MC), `μ_{z_l}` (MEAN) or `μ ∥ σ` (MEANSTD),
/// and must be empty for the single-level variants.
pub fn encode_high<T: Scalar>(model: &MfhnpModel<T>, summary: &[T], batch: &ContextTargetBatch<T>) -> Result<DiagGaussian<T>> {
    batch.expect_fidelity(Fidelity::High)?;
    let cfg = model.config();
    let expected = cfg.variant.summary_width(cfg.d_z);
    if summary.len() != expected {
        return Err(Error::LengthMismatch { op: "z_l summary", expected, actual: summary.len() });
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let s = (!summary.is_empty()).then(|| vector_leaf(&mut tape, summary));
    let q = context_posterior(&mut tape, bound.level(Fidelity::High)?, cfg, Fidelity::High, &batch.context, s)?;
    q.value(&tape, 0)
}

/// `p(y | z, x)` at one level. `y_low` is required exactly for the MF-NP high decoder.
pub fn decode<T: Scalar>(
    model: &MfhnpModel<T>,
    level: Fidelity,
    z: &[T],
    x: &[T],
    y_low: Option<&[T]>,
) -> Result<DiagGaussian<T>> {
    let cfg = model.config();
    if z.len() != cfg.d_z {
        return Err(Error::LengthMismatch { op: "decode z", expected: cfg.d_z, actual: z.len() });
    }
    let (d_x, d_y) = match level {
        Fidelity::High => (cfg.d_x_high, cfg.d_y_high),
        Fidelity::Low => (cfg.d_x_low, cfg.d_y_low),
    };
    if x.len() != d_x {
        return Err(Error::LengthMismatch { op: "decode x", expected: d_x, actual: x.len() });
    }
    let wants_low = level == Fidelity::High && cfg.variant == Variant::Mf;
    let y_low = match (wants_low, y_low) {
        (true, None) => return Err(Error::Unpaired { index: 0 }),
        (true, Some(v)) if v.len() != cfg.d_y_low => {
            return Err(Error::LengthMismatch { op: "decode y_low", expected: cfg.d_y_low, actual: v.len() })
        }
        (true, Some(v)) => Some(v),
        (false, _) => None,
    };
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let zv = vector_leaf(&mut tape, z);
    let xv = vector_leaf(&mut tape, x);
    let yl = y_low.map(|v| vector_leaf(&mut tape, v));
    let out = decode_rows(&mut tape, bound.level(level)?, d_y, zv, xv, yl)?;
    out.value(&tape, 0)
}

/// Predictive distribution over `y_h` for every query.
///
/// Each of the `n_samples` draws passes through the hierarchy (a `z_l` draw
/// for AS and MC, then `z_h`), decodes every query, and the per-query decodes
/// are moment matched. Noise for sample `i` is drawn as `ε_l` (if any) then `ε_h`.
pub fn predict<T: Scalar, R: Rng + ?Sized>(
    model: &MfhnpModel<T>,
    low_context: &[Point<T>],
    high_context: &[Point<T>],
    queries: &[Query<T>],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<DiagGaussian<T>>> {
    if n_samples == 0 {
        return Err(Error::invalid("predict needs at least one latent sample"));
    }
    let cfg = model.config();
    let mf = cfg.variant == Variant::Mf;
    let mut xs = Vec::with_capacity(queries.len() * cfg.d_x_high);
    let mut yls = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        if q.x.len() != cfg.d_x_high {
            return Err(Error::LengthMismatch { op: "query x", expected: cfg.d_x_high, actual: q.x.len() });
        }
        xs.extend_from_slice(&q.x);
        if mf {
            let yl = q.y_low.as_ref().ok_or(Error::Unpaired { index: i })?;
            if yl.len() != cfg.d_y_low {
                return Err(Error::LengthMismatch { op: "query y_low", expected: cfg.d_y_low, actual: yl.len() });
            }
            yls.extend_from_slice(yl);
        }
    }
    if queries.is_empty() {
        return Ok(Vec::new());
    }

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let high = bound.level(Fidelity::High)?;
    let x = tape.leaf(Tensor::matrix(queries.len(), cfg.d_x_high, xs)?);
    let y_low = if mf { Some(tape.leaf(Tensor::matrix(queries.len(), cfg.d_y_low, yls)?)) } else { None };

    let q_low = if cfg.variant.is_hierarchical() {
        Some(context_posterior(&mut tape, bound.level(Fidelity::Low)?, cfg, Fidelity::Low, low_context, None)?)
    } else {
        None
    };
    let fixed_high = match (cfg.variant, &q_low) {
        (Variant::Sf | Variant::Mf, _) => Some(context_posterior(&mut tape, high, cfg, Fidelity::High, high_context, None)?),
        (Variant::HnpMean, Some(q)) => Some(context_posterior(&mut tape, high, cfg, Fidelity::High, high_context, Some(q.mean))?),
        (Variant::HnpMeanStd, Some(q)) => {
            let s = mean_std_summary(&mut tape, q)?;
            Some(context_posterior(&mut tape, high, cfg, Fidelity::High, high_context, Some(s))?)
        }
        _ => None,
    };

    let mut per_query: Vec<Vec<DiagGaussian<T>>> = vec![Vec::with_capacity(n_samples); queries.len()];
    for _ in 0..n_samples {
        let q_high = match (&fixed_high, &q_low) {
            (Some(q), _) => *q,
            (None, Some(ql)) => {
                let eps = Tensor::raw(vec![1, cfg.d_z], standard_normal_vec(rng, cfg.d_z));
                let z_l = ql.rsample(&mut tape, eps)?;
                context_posterior(&mut tape, high, cfg, Fidelity::High, high_context, Some(z_l))?
            }
            (None, None) => unreachable!("single-level variants always have a fixed posterior"),
        };
        let eps = Tensor::raw(vec![1, cfg.d_z], standard_normal_vec(rng, cfg.d_z));
        let z_h = q_high.rsample(&mut tape, eps)?;
        let out = decode_rows(&mut tape, high, cfg.d_y_high, z_h, x, y_low)?;
        for (i, slot) in per_query.iter_mut().enumerate() {
            slot.push(out.value(&tape, i)?);
        }
    }
    per_query.iter().map(|c| moment_match(c)).collect()
}
