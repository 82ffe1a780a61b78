//! Shared NP fixtures and a straight-line recomputation of every objective term.

use mfhnp_core::aggregation::Aggregation;
use mfhnp_core::gaussian::VARIANCE_FLOOR;
use mfhnp_core::np::{model_elbo, ContextTargetBatch, Fidelity, LatentNoise, LevelNetworks, MfhnpModel, NpConfig, Point, Variant};
use mfhnp_core::numerics::{Activation, Mlp, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DXL: usize = 3;
pub const DYL: usize = 2;
pub const DXH: usize = 4;
pub const DYH: usize = 2;

pub fn config(variant: Variant, agg: Aggregation, k: usize, s: usize) -> NpConfig {
    let mut c = NpConfig::new(variant, agg, DXL, DYL, DXH, DYH);
    c.d_z = 3;
    c.d_r = 5;
    c.encoder_hidden = vec![6];
    c.decoder_hidden = vec![6, 5];
    c.activation = Activation::Tanh;
    c.k_samples = k;
    c.s_samples = s;
    c
}

pub fn model(cfg: NpConfig, seed: u64) -> MfhnpModel<f64> {
    let mut m = MfhnpModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    // Move the BA prior off its initial value so prior terms are exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    for f in [Fidelity::Low, Fidelity::High] {
        if let Ok(level) = m.level_mut(f) {
            for t in [&mut level.prior_mean, &mut level.prior_raw_variance].into_iter().flatten() {
                let data = t.data().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
                *t = Tensor::new(t.shape().to_vec(), data).unwrap();
            }
        }
    }
    m
}

pub fn vec_in(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn points(rng: &mut ChaCha8Rng, n: usize, dx: usize, dy: usize, paired: bool) -> Vec<Point<f64>> {
    (0..n)
        .map(|_| {
            let x = vec_in(rng, dx);
            let y = vec_in(rng, dy);
            if paired {
                Point::paired(x, y, vec_in(rng, DYL))
            } else {
                Point::new(x, y)
            }
        })
        .collect()
}

pub fn batches(seed: u64, paired: bool) -> (ContextTargetBatch<f64>, ContextTargetBatch<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = ContextTargetBatch::new(Fidelity::Low, points(&mut rng, 4, DXL, DYL, false), points(&mut rng, 3, DXL, DYL, false));
    let high = ContextTargetBatch::new(Fidelity::High, points(&mut rng, 2, DXH, DYH, paired), points(&mut rng, 3, DXH, DYH, paired));
    (low, high)
}

pub fn elbo(m: &MfhnpModel<f64>, low: &ContextTargetBatch<f64>, high: &ContextTargetBatch<f64>, noise: &LatentNoise<f64>) -> f64 {
    let lo = m.config().variant.is_hierarchical().then_some(low);
    model_elbo(m, lo, high, noise).unwrap().loss
}

/// Straight-line recomputation of every objective term.
pub mod oracle {
    use super::*;

    fn sp(x: f64) -> f64 {
        if x > 30.0 {
            x
        } else {
            x.exp().ln_1p()
        }
    }

    pub fn net(m: &Mlp<f64>, input: &[f64]) -> Vec<f64> {
        m.forward(&Tensor::matrix(1, input.len(), input.to_vec()).unwrap()).unwrap().into_data()
    }

    #[derive(Clone, Debug)]
    pub struct G {
        pub mean: Vec<f64>,
        pub var: Vec<f64>,
    }

    impl G {
        fn sample(&self, eps: &[f64]) -> Vec<f64> {
            (0..self.mean.len()).map(|j| self.mean[j] + self.var[j].sqrt() * eps[j]).collect()
        }
    }

    fn head(out: &[f64], d: usize) -> G {
        G { mean: out[..d].to_vec(), var: out[d..2 * d].iter().map(|&r| sp(r) + VARIANCE_FLOOR).collect() }
    }

    pub fn posterior(level: &LevelNetworks<f64>, cfg: &NpConfig, rows: &[Vec<f64>]) -> G {
        let dz = cfg.d_z;
        match cfg.aggregation {
            Aggregation::Bayesian => {
                let m0 = level.prior_mean.as_ref().unwrap().data().to_vec();
                let v0: Vec<f64> = level.prior_raw_variance.as_ref().unwrap().data().iter().map(|&r| sp(r) + VARIANCE_FLOOR).collect();
                let mut prec: Vec<f64> = v0.iter().map(|v| 1.0 / v).collect();
                let mut acc = vec![0.0; dz];
                for row in rows {
                    let out = net(&level.encoder, row);
                    for j in 0..dz {
                        let v = sp(out[dz + j]) + VARIANCE_FLOOR;
                        prec[j] += 1.0 / v;
                        acc[j] += (out[j] - m0[j]) / v;
                    }
                }
                let var: Vec<f64> = prec.iter().map(|p| 1.0 / p).collect();
                let mean = (0..dz).map(|j| m0[j] + var[j] * acc[j]).collect();
                G { mean, var }
            }
            Aggregation::Mean => {
                let mut rbar = vec![0.0; cfg.d_r];
                for row in rows {
                    for (a, v) in rbar.iter_mut().zip(net(&level.encoder, row)) {
                        *a += v / rows.len() as f64;
                    }
                }
                head(&net(level.latent_head.as_ref().unwrap(), &rbar), dz)
            }
        }
    }

    pub fn enc_row(cfg: &NpConfig, high: bool, p: &Point<f64>, summary: &[f64]) -> Vec<f64> {
        let mut v = p.x.clone();
        if high && cfg.variant == Variant::Mf {
            v.extend(p.y_low.as_ref().unwrap());
        }
        v.extend(&p.y);
        if high {
            v.extend(summary);
        }
        v
    }

    pub fn decode(level: &LevelNetworks<f64>, d_y: usize, z: &[f64], p: &Point<f64>, with_low: bool) -> G {
        let mut input = z.to_vec();
        input.extend(&p.x);
        if with_low {
            input.extend(p.y_low.as_ref().unwrap());
        }
        head(&net(&level.decoder, &input), d_y)
    }

    pub fn log_prob(g: &G, y: &[f64]) -> f64 {
        (0..y.len())
            .map(|j| -0.5 * ((2.0 * std::f64::consts::PI).ln() + g.var[j].ln() + (y[j] - g.mean[j]).powi(2) / g.var[j]))
            .sum()
    }

    pub fn kl(q: &G, p: &G) -> f64 {
        0.5 * (0..q.mean.len())
            .map(|j| (p.var[j] / q.var[j]).ln() + (q.var[j] + (q.mean[j] - p.mean[j]).powi(2)) / p.var[j] - 1.0)
            .sum::<f64>()
    }

    pub struct Terms {
        pub high_ll: f64,
        pub high_kl: f64,
        pub low_ll: f64,
        pub low_kl: f64,
        pub loss: f64,
    }

    fn level_posteriors(level: &LevelNetworks<f64>, cfg: &NpConfig, high: bool, b: &ContextTargetBatch<f64>, summary: &[f64]) -> (G, G) {
        let ctx: Vec<_> = b.context.iter().map(|p| enc_row(cfg, high, p, summary)).collect();
        let all: Vec<_> = b.points().map(|p| enc_row(cfg, high, p, summary)).collect();
        (posterior(level, cfg, &ctx), posterior(level, cfg, &all))
    }

    fn ll(level: &LevelNetworks<f64>, d_y: usize, z: &[f64], b: &ContextTargetBatch<f64>, with_low: bool) -> f64 {
        b.target.iter().map(|p| log_prob(&decode(level, d_y, z, p, with_low), &p.y)).sum()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn terms(m: &MfhnpModel<f64>, low: &ContextTargetBatch<f64>, high: &ContextTargetBatch<f64>, noise: &LatentNoise<f64>) -> Terms {
        let cfg = m.config();
        let mf = cfg.variant == Variant::Mf;
        let (mut low_ll, mut low_kl) = (0.0, 0.0);
        let mut z_low = Vec::new();
        let mut q_low = None;
        if cfg.variant.is_hierarchical() {
            let lv = m.level(Fidelity::Low).unwrap();
            let (qc, qct) = level_posteriors(lv, cfg, false, low, &[]);
            let lls: Vec<f64> = noise
                .low
                .iter()
                .map(|eps| {
                    let z = qct.sample(eps);
                    let v = ll(lv, cfg.d_y_low, &z, low, false);
                    z_low.push(z);
                    v
                })
                .collect();
            low_ll = mean(&lls);
            low_kl = kl(&qct, &qc);
            q_low = Some(qct);
        }
        let hv = m.level(Fidelity::High).unwrap();
        let (high_ll, high_kl) = match cfg.variant {
            Variant::HnpAs => {
                let mut lls = Vec::new();
                let mut kls = Vec::new();
                for (s, eps) in noise.high.iter().enumerate() {
                    let (qc, qct) = level_posteriors(hv, cfg, true, high, &z_low[s]);
                    lls.push(ll(hv, cfg.d_y_high, &qct.sample(eps), high, false));
                    kls.push(kl(&qct, &qc));
                }
                (mean(&lls), mean(&kls))
            }
            Variant::HnpMc => {
                let s_n = cfg.s_samples;
                let mut lls = Vec::new();
                let mut kls = Vec::new();
                for (k, zl) in z_low.iter().enumerate() {
                    let (qc, qct) = level_posteriors(hv, cfg, true, high, zl);
                    let inner: Vec<f64> =
                        noise.high[k * s_n..(k + 1) * s_n].iter().map(|eps| ll(hv, cfg.d_y_high, &qct.sample(eps), high, false)).collect();
                    lls.push(mean(&inner));
                    kls.push(kl(&qct, &qc));
                }
                (mean(&lls), mean(&kls))
            }
            v => {
                let summary = match (v, &q_low) {
                    (Variant::HnpMean, Some(q)) => q.mean.clone(),
                    (Variant::HnpMeanStd, Some(q)) => q.mean.iter().cloned().chain(q.var.iter().map(|v| v.sqrt())).collect(),
                    _ => Vec::new(),
                };
                let (qc, qct) = level_posteriors(hv, cfg, true, high, &summary);
                let lls: Vec<f64> = noise.high.iter().map(|eps| ll(hv, cfg.d_y_high, &qct.sample(eps), high, mf)).collect();
                (mean(&lls), kl(&qct, &qc))
            }
        };
        let mut objective = (high_ll - high_kl) / high.target.len() as f64;
        if cfg.variant.is_hierarchical() {
            objective += (low_ll - low_kl) / low.target.len() as f64;
        }
        Terms { high_ll, high_kl, low_ll, low_kl, loss: -objective }
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub const AGGS: [Aggregation; 2] = [Aggregation::Mean, Aggregation::Bayesian];
