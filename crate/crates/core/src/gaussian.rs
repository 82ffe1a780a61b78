//! Factorised (diagonal) Gaussian algebra, with tape-aware counterparts for
//! training objectives.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::{softplus, Scalar};

/// Added after softplus to every variance emitted by a network.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// `N(mean, diag(variance))`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian<T> {
    mean: Vec<T>,
    variance: Vec<T>,
}

impl<T: Scalar> DiagGaussian<T> {
    pub fn new(mean: Vec<T>, variance: Vec<T>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::LengthMismatch { op: "DiagGaussian::new", expected: mean.len(), actual: variance.len() });
        }
        if mean.iter().any(|m| !m.is_finite()) || variance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DiagGaussian::new"));
        }
        if variance.iter().any(|&v| v <= T::zero()) {
            return Err(Error::Domain("DiagGaussian variance"));
        }
        Ok(DiagGaussian { mean, variance })
    }

    /// Variance from an unconstrained head output: `softplus(raw) + floor`.
    pub fn from_raw(mean: Vec<T>, raw_variance: &[T]) -> Result<Self> {
        let floor = T::of(VARIANCE_FLOOR);
        Self::new(mean, raw_variance.iter().map(|&r| softplus(r) + floor).collect())
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian { mean: vec![T::zero(); dim], variance: vec![T::one(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn variance(&self) -> &[T] {
        &self.variance
    }

    pub fn std(&self) -> Vec<T> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    /// Sum over dimensions of the univariate log-densities.
    pub fn log_prob(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch { op: "log_prob", expected: self.dim(), actual: x.len() });
        }
        let ln_2pi = (T::of(2.0) * T::PI()).ln();
        let half = T::of(0.5);
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((&x, &m), &v)| -half * (ln_2pi + v.ln() + (x - m) * (x - m) / v))
            .fold(T::zero(), |a, b| a + b))
    }

    /// `mean + sqrt(variance) * eps` for a caller-supplied standard-normal draw.
    pub fn sample_with(&self, eps: &[T]) -> Result<Vec<T>> {
        if eps.len() != self.dim() {
            return Err(Error::LengthMismatch { op: "sample_with", expected: self.dim(), actual: eps.len() });
        }
        Ok(self.mean.iter().zip(&self.variance).zip(eps).map(|((&m, &v), &e)| m + v.sqrt() * e).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let eps = standard_normal_vec(rng, self.dim());
        self.sample_with(&eps).expect("eps has the distribution's dimension")
    }
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn kl_divergence<T: Scalar>(q: &DiagGaussian<T>, p: &DiagGaussian<T>) -> Result<T> {
    if q.dim() != p.dim() {
        return Err(Error::LengthMismatch { op: "kl_divergence", expected: q.dim(), actual: p.dim() });
    }
    let half = T::of(0.5);
    let mut acc = T::zero();
    for i in 0..q.dim() {
        let (mq, vq, mp, vp) = (q.mean[i], q.variance[i], p.mean[i], p.variance[i]);
        let d = mq - mp;
        acc = acc + half * ((vp / vq).ln() + (vq + d * d) / vp - T::one());
    }
    Ok(acc)
}

/// Collapses an equally weighted mixture to its first two moments.
pub fn moment_match<T: Scalar>(components: &[DiagGaussian<T>]) -> Result<DiagGaussian<T>> {
    let first = components.first().ok_or(Error::Empty("moment_match needs at least one component"))?;
    let dim = first.dim();
    if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
        return Err(Error::LengthMismatch { op: "moment_match", expected: dim, actual: bad.dim() });
    }
    let n = T::of(components.len() as f64);
    let floor = T::of(VARIANCE_FLOOR);
    let mut mean = vec![T::zero(); dim];
    for c in components {
        for (m, &cm) in mean.iter_mut().zip(&c.mean) {
            *m = *m + cm;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    // E[var] + Var[mean]; equal to E[var + mean^2] - mean^2 but exact for one component.
    let mut within = vec![T::zero(); dim];
    let mut between = vec![T::zero(); dim];
    for c in components {
        for i in 0..dim {
            let d = c.mean[i] - mean[i];
            within[i] = within[i] + c.variance[i];
            between[i] = between[i] + d * d;
        }
    }
    let variance = within.iter().zip(&between).map(|(&w, &b)| (w / n + b / n).max(floor)).collect();
    DiagGaussian::new(mean, variance)
}

pub fn standard_normal_vec<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// A diagonal Gaussian whose parameters live on a tape. Shapes are `[d]` or
/// `[n, d]` (one distribution per row).
#[derive(Clone, Copy, Debug)]
pub struct TapedGaussian {
    pub mean: Var,
    pub variance: Var,
}

impl TapedGaussian {
    /// Splits a `[n, 2d]` head output into mean and floored-softplus variance.
    pub fn from_head<T: Scalar>(tape: &mut Tape<T>, head: Var, d: usize) -> Result<Self> {
        let width = tape.shape(head)?.last().copied().unwrap_or(0);
        if width != 2 * d {
            return Err(Error::LengthMismatch { op: "TapedGaussian::from_head", expected: 2 * d, actual: width });
        }
        let mean = tape.slice_cols(head, 0, d)?;
        let raw = tape.slice_cols(head, d, 2 * d)?;
        let variance = floored_softplus(tape, raw)?;
        Ok(TapedGaussian { mean, variance })
    }

    /// Reads row `row` (or the whole vector) back into a plain distribution.
    pub fn value<T: Scalar>(&self, tape: &Tape<T>, row: usize) -> Result<DiagGaussian<T>> {
        let m = tape.value(self.mean)?;
        let v = tape.value(self.variance)?;
        DiagGaussian::new(m.row(row).to_vec(), v.row(row).to_vec())
    }

    /// Sum over all entries of the Gaussian log-density of `x`.
    pub fn log_prob<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let diff = tape.sub(x, self.mean)?;
        let sq = tape.square(diff)?;
        let maha = tape.div(sq, self.variance)?;
        let logv = tape.ln(self.variance)?;
        let inner = tape.add(maha, logv)?;
        let n = tape.value(x)?.numel();
        let total = tape.sum(inner)?;
        let ln_2pi = (T::of(2.0) * T::PI()).ln();
        let shifted = tape.add_scalar(total, ln_2pi * T::of(n as f64))?;
        tape.scale(shifted, T::of(-0.5))
    }

    /// `mean + sqrt(variance) * eps`, differentiable in both parameters.
    pub fn rsample<T: Scalar>(&self, tape: &mut Tape<T>, eps: Tensor<T>) -> Result<Var> {
        let eps = tape.leaf(eps);
        let sd = tape.sqrt(self.variance)?;
        let noise = tape.mul(sd, eps)?;
        tape.add(self.mean, noise)
    }
}

/// `softplus(raw) + VARIANCE_FLOOR` on the tape.
pub fn floored_softplus<T: Scalar>(tape: &mut Tape<T>, raw: Var) -> Result<Var> {
    let sp = tape.softplus(raw)?;
    tape.add_scalar(sp, T::of(VARIANCE_FLOOR))
}

/// Closed-form `KL(q || p)` summed over all entries.
pub fn kl_taped<T: Scalar>(tape: &mut Tape<T>, q: &TapedGaussian, p: &TapedGaussian) -> Result<Var> {
    let ratio = tape.div(p.variance, q.variance)?;
    let log_ratio = tape.ln(ratio)?;
    let d = tape.sub(q.mean, p.mean)?;
    let d2 = tape.square(d)?;
    let num = tape.add(q.variance, d2)?;
    let frac = tape.div(num, p.variance)?;
    let s = tape.add(log_ratio, frac)?;
    let s = tape.add_scalar(s, -T::one())?;
    let total = tape.sum(s)?;
    tape.scale(total, T::of(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_log_density() {
        let d = DiagGaussian::<f64>::standard(1);
        assert!((d.log_prob(&[0.0]).unwrap() + 0.918939).abs() < 1e-6);
        let d3 = DiagGaussian::<f64>::standard(3);
        assert!((d3.log_prob(&[0.0; 3]).unwrap() + 2.756816).abs() < 1e-6);
        assert!(d3.log_prob(&[0.0; 2]).is_err());
    }

    #[test]
    fn kl_known_values() {
        let q = DiagGaussian::new(vec![1.0, 0.3], vec![1.0, 2.5]).unwrap();
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        let a = DiagGaussian::new(vec![1.0], vec![1.0]).unwrap();
        let b = DiagGaussian::<f64>::standard(1);
        assert!((kl_divergence(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!(kl_divergence(&a, &q).is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(DiagGaussian::new(vec![f64::NAN], vec![1.0]).is_err());
        let d = DiagGaussian::<f64>::from_raw(vec![0.0], &[-800.0]).unwrap();
        assert!(d.variance()[0] >= VARIANCE_FLOOR);
    }

    #[test]
    fn moment_match_identities() {
        let c = DiagGaussian::new(vec![0.25, -3.0], vec![0.7, 1e-3]).unwrap();
        assert_eq!(moment_match(&[c.clone()]).unwrap(), c);
        let floor = VARIANCE_FLOOR;
        let lo = DiagGaussian::new(vec![-1.0], vec![floor]).unwrap();
        let hi = DiagGaussian::new(vec![1.0], vec![floor]).unwrap();
        let m = moment_match(&[lo, hi]).unwrap();
        assert_eq!(m.mean()[0], 0.0);
        assert!((m.variance()[0] - 1.0).abs() < 1e-5);
        assert!(moment_match::<f64>(&[]).is_err());
    }

    #[test]
    fn degenerate_sample_sits_on_the_mean() {
        let d = DiagGaussian::new(vec![2.0, -1.0], vec![VARIANCE_FLOOR; 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s = d.sample(&mut rng);
            for (x, m) in s.iter().zip(d.mean()) {
                assert!((x - m).abs() < VARIANCE_FLOOR.sqrt() * 6.0);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let d = DiagGaussian::new(vec![0.5; 4], vec![2.0; 4]).unwrap();
        let a = d.sample(&mut ChaCha8Rng::seed_from_u64(11));
        let b = d.sample(&mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn taped_terms_match_plain_terms() {
        let q = DiagGaussian::new(vec![0.1, -0.4, 2.0], vec![0.5, 1.5, 0.2]).unwrap();
        let p = DiagGaussian::new(vec![0.0, 0.3, 1.0], vec![1.0, 0.7, 3.0]).unwrap();
        let x = [0.3, 0.0, 1.7];
        let mut tape = Tape::<f64>::new();
        let tq = TapedGaussian {
            mean: tape.leaf(Tensor::vector(q.mean().to_vec()).unwrap()),
            variance: tape.leaf(Tensor::vector(q.variance().to_vec()).unwrap()),
        };
        let tp = TapedGaussian {
            mean: tape.leaf(Tensor::vector(p.mean().to_vec()).unwrap()),
            variance: tape.leaf(Tensor::vector(p.variance().to_vec()).unwrap()),
        };
        let xv = tape.leaf(Tensor::vector(x.to_vec()).unwrap());
        let lp = tq.log_prob(&mut tape, xv).unwrap();
        let kl = kl_taped(&mut tape, &tq, &tp).unwrap();
        let lp = tape.value(lp).unwrap().item().unwrap();
        let kl = tape.value(kl).unwrap().item().unwrap();
        assert!((lp - q.log_prob(&x).unwrap()).abs() < 1e-12);
        assert!((kl - kl_divergence(&q, &p).unwrap()).abs() < 1e-12);
    }
}
