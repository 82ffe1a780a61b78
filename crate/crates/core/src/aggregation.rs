//! Permutation-invariant context aggregation: mean aggregation (MA) and
//! Bayesian aggregation (BA).
//!
//! Both aggregators sum observations in a canonical order (lexicographic on the
//! observation values), so any permutation of the context set produces
//! bit-identical output.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::gaussian::{DiagGaussian, TapedGaussian};
use crate::numerics::{BoundMlp, Mlp, Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Aggregation {
    Mean,
    #[default]
    Bayesian,
}

impl Aggregation {
    pub fn tag(self) -> &'static str {
        match self {
            Aggregation::Mean => "ma",
            Aggregation::Bayesian => "ba",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag.to_ascii_lowercase().as_str() {
            "ma" | "mean" => Ok(Aggregation::Mean),
            "ba" | "bayesian" => Ok(Aggregation::Bayesian),
            other => Err(Error::invalid(format!("unknown aggregation `{other}` (expected ma or ba)"))),
        }
    }
}

/// Per-context-point encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentObservation<T> {
    pub r: Vec<T>,
    /// Observation variance, present under BA only.
    pub obs_variance: Option<Vec<T>>,
}

impl<T: Scalar> LatentObservation<T> {
    pub fn mean_only(r: Vec<T>) -> Self {
        LatentObservation { r, obs_variance: None }
    }

    pub fn with_variance(r: Vec<T>, obs_variance: Vec<T>) -> Result<Self> {
        if r.len() != obs_variance.len() {
            return Err(Error::LengthMismatch { op: "LatentObservation", expected: r.len(), actual: obs_variance.len() });
        }
        if obs_variance.iter().any(|&v| !(v > T::zero())) {
            return Err(Error::Domain("observation variance"));
        }
        Ok(LatentObservation { r, obs_variance: Some(obs_variance) })
    }
}

/// Gaussian prior that BA updates with each observation.
#[derive(Clone, Debug, PartialEq)]
pub struct BaPrior<T> {
    pub mean0: Vec<T>,
    pub variance0: Vec<T>,
    pub learnable: bool,
}

impl<T: Scalar> BaPrior<T> {
    pub fn new(mean0: Vec<T>, variance0: Vec<T>, learnable: bool) -> Result<Self> {
        if mean0.len() != variance0.len() {
            return Err(Error::LengthMismatch { op: "BaPrior", expected: mean0.len(), actual: variance0.len() });
        }
        if variance0.iter().any(|&v| !(v > T::zero())) {
            return Err(Error::Domain("BA prior variance"));
        }
        Ok(BaPrior { mean0, variance0, learnable })
    }

    /// The default initialisation `N(0, I)`.
    pub fn standard(dim: usize) -> Self {
        BaPrior { mean0: vec![T::zero(); dim], variance0: vec![T::one(); dim], learnable: true }
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Orders `subset` (row indices) by the concatenated row values of `keys`.
pub fn canonical_order<T: Scalar>(keys: &[&Tensor<T>], subset: &[usize]) -> Vec<usize> {
    let mut idx = subset.to_vec();
    idx.sort_by(|&a, &b| {
        keys.iter()
            .map(|k| lex_cmp(k.row(a), k.row(b)))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx
}

/// MA: average the representations, then map `r̄` through `head` to the
/// latent mean and (floored softplus) variance.
pub fn mean_aggregate<T: Scalar>(observations: &[LatentObservation<T>], head: &Mlp<T>) -> Result<DiagGaussian<T>> {
    let first = observations.first().ok_or(Error::Empty("mean aggregation needs at least one context point"))?;
    let d_r = first.r.len();
    let rows = Tensor::from_rows(&observations.iter().map(|o| o.r.as_slice()).collect::<Vec<_>>(), d_r)?;
    let order = canonical_order(&[&rows], &(0..observations.len()).collect::<Vec<_>>());
    let mut sum = vec![T::zero(); d_r];
    for &i in &order {
        for (s, &v) in sum.iter_mut().zip(rows.row(i)) {
            *s = *s + v;
        }
    }
    let n = T::of(observations.len() as f64);
    let r_bar = Tensor::matrix(1, d_r, sum.into_iter().map(|s| s / n).collect())?;
    let out = head.forward(&r_bar)?;
    let d_z = out.cols() / 2;
    if out.cols() != 2 * d_z {
        return Err(Error::invalid("latent head must emit an even number of outputs"));
    }
    DiagGaussian::from_raw(out.row(0)[..d_z].to_vec(), &out.row(0)[d_z..])
}

/// BA: conjugate precision-weighted update of `prior` by every observation.
/// An empty observation list returns the prior itself.
pub fn bayesian_aggregate<T: Scalar>(prior: &BaPrior<T>, observations: &[LatentObservation<T>]) -> Result<DiagGaussian<T>> {
    let d = prior.dim();
    let mut r_rows = Vec::with_capacity(observations.len());
    let mut v_rows = Vec::with_capacity(observations.len());
    for o in observations {
        let v = o.obs_variance.as_ref().ok_or_else(|| Error::invalid("BA observation without a variance"))?;
        if o.r.len() != d || v.len() != d {
            return Err(Error::LengthMismatch { op: "bayesian_aggregate", expected: d, actual: o.r.len() });
        }
        r_rows.push(o.r.as_slice());
        v_rows.push(v.as_slice());
    }
    let r = Tensor::from_rows(&r_rows, d)?;
    let v = Tensor::from_rows(&v_rows, d)?;
    let order = canonical_order(&[&r, &v], &(0..observations.len()).collect::<Vec<_>>());
    let mut precision: Vec<T> = prior.variance0.iter().map(|&v0| T::one() / v0).collect();
    let mut weighted = vec![T::zero(); d];
    let mut obs_precision = vec![T::zero(); d];
    for &i in &order {
        for j in 0..d {
            obs_precision[j] = obs_precision[j] + T::one() / v.row(i)[j];
            weighted[j] = weighted[j] + (r.row(i)[j] - prior.mean0[j]) / v.row(i)[j];
        }
    }
    if observations.is_empty() {
        return DiagGaussian::new(prior.mean0.clone(), prior.variance0.clone());
    }
    for j in 0..d {
        precision[j] = precision[j] + obs_precision[j];
    }
    let variance: Vec<T> = precision.iter().map(|&p| T::one() / p).collect();
    let mean = (0..d).map(|j| prior.mean0[j] + variance[j] * weighted[j]).collect();
    DiagGaussian::new(mean, variance)
}

/// Tape version of [`mean_aggregate`] over rows `subset` of `r` (`[N, d_r]`).
pub fn mean_aggregate_taped<T: Scalar>(
    tape: &mut Tape<T>,
    r: Var,
    subset: &[usize],
    head: &BoundMlp,
    d_z: usize,
) -> Result<TapedGaussian> {
    if subset.is_empty() {
        return Err(Error::Empty("mean aggregation needs at least one context point"));
    }
    let order = canonical_order(&[tape.value(r)?], subset);
    let rows = tape.gather_rows(r, &order)?;
    let total = tape.sum_rows(rows)?;
    let d_r = tape.shape(total)?[0];
    let total = tape.reshape(total, vec![1, d_r])?;
    let r_bar = tape.scale(total, T::one() / T::of(subset.len() as f64))?;
    let out = head.forward(tape, r_bar)?;
    TapedGaussian::from_head(tape, out, d_z)
}

/// Tape version of [`bayesian_aggregate`]. `prior` has shape `[1, d_z]`;
/// `r` and `obs_variance` are `[N, d_z]` and only rows in `subset` are used.
pub fn bayesian_aggregate_taped<T: Scalar>(
    tape: &mut Tape<T>,
    prior: &TapedGaussian,
    r: Var,
    obs_variance: Var,
    subset: &[usize],
) -> Result<TapedGaussian> {
    if subset.is_empty() {
        return Ok(*prior);
    }
    let order = canonical_order(&[tape.value(r)?, tape.value(obs_variance)?], subset);
    let r = tape.gather_rows(r, &order)?;
    let v = tape.gather_rows(obs_variance, &order)?;
    let d = tape.shape(r)?[1];
    let ones = tape.leaf(Tensor::raw(vec![order.len(), d], vec![T::one(); order.len() * d]));
    let obs_prec = tape.div(ones, v)?;
    let obs_prec = tape.sum_rows(obs_prec)?;
    let obs_prec = tape.reshape(obs_prec, vec![1, d])?;
    let one = tape.leaf(Tensor::raw(vec![1, d], vec![T::one(); d]));
    let prior_prec = tape.div(one, prior.variance)?;
    let prec = tape.add(prior_prec, obs_prec)?;
    let variance = tape.div(one, prec)?;
    let diff = tape.sub(r, prior.mean)?;
    let weighted = tape.div(diff, v)?;
    let weighted = tape.sum_rows(weighted)?;
    let weighted = tape.reshape(weighted, vec![1, d])?;
    let shift = tape.mul(variance, weighted)?;
    let mean = tape.add(prior.mean, shift)?;
    Ok(TapedGaussian { mean, variance })
}
