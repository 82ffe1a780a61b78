//! Independent reference computations used by several test targets.

use mfhnp_core::aggregation::{BaPrior, LatentObservation};
use mfhnp_core::gaussian::DiagGaussian;
use mfhnp_core::numerics::{Activation, Mlp, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Largest componentwise `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6)).fold(0.0, f64::max)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub type OpFn = dyn Fn(&mut Tape<f64>, &[Var]) -> Var;

fn weighted_loss(tape: &mut Tape<f64>, inputs: &[Tensor<f64>], f: &OpFn, w: Option<&Tensor<f64>>) -> (Vec<Var>, Var, Tensor<f64>) {
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(tape, &leaves);
    let out_val = tape.value(out).unwrap().clone();
    let w = w.cloned().unwrap_or_else(|| out_val.clone());
    let wv = tape.leaf(w.clone());
    let prod = tape.mul(out, wv).unwrap();
    let loss = tape.sum(prod).unwrap();
    (leaves, loss, w)
}

/// Relative error of the tape gradient of `sum(w ⊙ f(inputs))` against central differences.
pub fn op_gradient_error(inputs: &[Tensor<f64>], f: &OpFn, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| probe.leaf(t.clone())).collect();
    let out = f(&mut probe, &leaves);
    let shape = probe.value(out).unwrap().shape().to_vec();
    let w = uniform(&mut rng, &shape, -1.0, 1.0);

    let mut tape = Tape::new();
    let (leaves, loss, _) = weighted_loss(&mut tape, inputs, f, Some(&w));
    let grads = tape.backward(loss).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, leaf) in leaves.iter().enumerate() {
        analytic.extend_from_slice(grads.wrt(*leaf).unwrap().data());
        for i in 0..inputs[k].numel() {
            let eval = |delta: f64| {
                let mut perturbed = inputs.to_vec();
                let mut data = perturbed[k].data().to_vec();
                data[i] += delta;
                perturbed[k] = Tensor::new(perturbed[k].shape().to_vec(), data).unwrap();
                let mut t = Tape::new();
                let (_, l, _) = weighted_loss(&mut t, &perturbed, f, Some(&w));
                t.value(l).unwrap().item().unwrap()
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

/// A random tanh MLP with at most `max_params` parameters, a random input batch and output weights.
pub fn random_mlp(rng: &mut ChaCha8Rng, max_params: usize) -> (Mlp<f64>, Tensor<f64>, Tensor<f64>) {
    loop {
        let depth = rng.random_range(2..=4);
        let dims: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=16)).collect();
        let count: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if count > max_params {
            continue;
        }
        let mut mlp = Mlp::new(&dims, Activation::Tanh, rng).unwrap();
        // Nonzero biases so every parameter matters.
        for b in mlp.params_mut().into_iter().skip(1).step_by(2) {
            *b = uniform(rng, &b.shape().to_vec(), -0.5, 0.5);
        }
        let n = rng.random_range(1..=4);
        let x = uniform(rng, &[n, dims[0]], -2.0, 2.0);
        let w = uniform(rng, &[n, *dims.last().unwrap()], -1.0, 1.0);
        return (mlp, x, w);
    }
}

fn plain_loss(mlp: &Mlp<f64>, x: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    mlp.forward(x).unwrap().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// `(param_count, relative error)` of parameter gradients for one random MLP.
pub fn mlp_gradient_error(seed: u64, max_params: usize) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mlp, x, w) = random_mlp(&mut rng, max_params);
    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let out = bound.forward(&mut tape, xv).unwrap();
    let wv = tape.leaf(w.clone());
    let prod = tape.mul(out, wv).unwrap();
    let loss = tape.sum(prod).unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<f64> = bound.vars().iter().flat_map(|v| grads.wrt(*v).unwrap().into_data()).collect();

    let h = 1e-5;
    let mut numeric = Vec::with_capacity(analytic.len());
    let params: Vec<Tensor<f64>> = mlp.params().into_iter().cloned().collect();
    for p in 0..params.len() {
        for i in 0..params[p].numel() {
            let eval = |delta: f64| {
                let mut ps = params.clone();
                let mut data = ps[p].data().to_vec();
                data[i] += delta;
                ps[p] = Tensor::new(ps[p].shape().to_vec(), data).unwrap();
                let weights = ps.iter().step_by(2).cloned().collect();
                let biases = ps.iter().skip(1).step_by(2).cloned().collect();
                let m = Mlp::from_parts(mlp.layer_dims().to_vec(), weights, biases, Activation::Tanh).unwrap();
                plain_loss(&m, &x, &w)
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    (mlp.param_count(), rel_err(&analytic, &numeric))
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, dim: usize, var_lo: f64, var_hi: f64) -> DiagGaussian<f64> {
    let mean = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let var = (0..dim).map(|_| rng.random_range(var_lo..var_hi)).collect();
    DiagGaussian::new(mean, var).unwrap()
}

/// Univariate normal density written out directly.
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Monte-Carlo estimate of `E_q[log q - log p]` using a direct density formula.
pub fn mc_kl(q: &DiagGaussian<f64>, p: &DiagGaussian<f64>, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let d = q.dim();
    let sd: Vec<f64> = q.variance().iter().map(|v| v.sqrt()).collect();
    // Normalizer difference, then per-sample quadratic forms.
    let offset: f64 = (0..d).map(|i| 0.5 * (p.variance()[i] / q.variance()[i]).ln()).sum();
    let mut acc = 0.0;
    for _ in 0..n {
        let mut term = offset;
        for i in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            let x = q.mean()[i] + sd[i] * e;
            let (dq, dp) = (x - q.mean()[i], x - p.mean()[i]);
            term += 0.5 * (dp * dp / p.variance()[i] - dq * dq / q.variance()[i]);
        }
        acc += term;
    }
    acc / n as f64
}

/// Composite Simpson integral of a 1-D density over `mean ± 10σ`.
pub fn quadrature_mass(g: &DiagGaussian<f64>, intervals: usize) -> f64 {
    assert_eq!(g.dim(), 1);
    assert!(intervals % 2 == 0);
    let (m, s) = (g.mean()[0], g.variance()[0].sqrt());
    let (a, b) = (m - 10.0 * s, m + 10.0 * s);
    let h = (b - a) / intervals as f64;
    let f = |x: f64| g.log_prob(&[x]).unwrap().exp();
    let mut acc = f(a) + f(b);
    for k in 1..intervals {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Posterior after conditioning on observations one at a time; each step's posterior is the next prior.
pub fn sequential_ba(prior: &BaPrior<f64>, obs: &[LatentObservation<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut mean = prior.mean0.clone();
    let mut var = prior.variance0.clone();
    for o in obs {
        let ov = o.obs_variance.as_ref().unwrap();
        for j in 0..mean.len() {
            let post_var = 1.0 / (1.0 / var[j] + 1.0 / ov[j]);
            mean[j] += post_var * (o.r[j] - mean[j]) / ov[j];
            var[j] = post_var;
        }
    }
    (mean, var)
}

pub fn random_ba_case(rng: &mut ChaCha8Rng, max_n: usize) -> (BaPrior<f64>, Vec<LatentObservation<f64>>) {
    let d = rng.random_range(1..=6);
    let prior = BaPrior::new(
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..d).map(|_| rng.random_range(0.2..3.0)).collect(),
        true,
    )
    .unwrap();
    let n = rng.random_range(0..=max_n);
    let obs = (0..n)
        .map(|_| {
            LatentObservation::with_variance(
                (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                (0..d).map(|_| rng.random_range(0.05..4.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    (prior, obs)
}
