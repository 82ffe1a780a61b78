use mfhnp_core::gaussian::{kl_divergence, moment_match, DiagGaussian, TapedGaussian, VARIANCE_FLOOR};
use mfhnp_core::numerics::{Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::oracles::{mc_kl, normal_pdf, quadrature_mass, random_gaussian};

#[test]
fn standard_normal_log_density_at_zero() {
    let one = DiagGaussian::<f64>::standard(1).log_prob(&[0.0]).unwrap();
    assert!((one + 0.918939).abs() < 1e-6);
    let three = DiagGaussian::<f64>::standard(3).log_prob(&[0.0; 3]).unwrap();
    assert!((three + 2.756816).abs() < 1e-6);
    assert!(DiagGaussian::<f64>::standard(3).log_prob(&[0.0; 2]).is_err());
}

#[test]
fn log_prob_matches_product_of_univariate_densities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let d = rng.random_range(1..=6);
        let g = random_gaussian(&mut rng, d, 0.3, 3.0);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let product: f64 = (0..d).map(|i| normal_pdf(x[i], g.mean()[i], g.variance()[i])).product();
        assert!((g.log_prob(&x).unwrap().exp() - product).abs() < 1e-12);
    }
}

#[test]
fn kl_closed_form_cases() {
    let q = DiagGaussian::new(vec![0.3, -1.2], vec![0.7, 2.0]).unwrap();
    assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
    let a = DiagGaussian::<f64>::new(vec![1.0], vec![1.0]).unwrap();
    assert!((kl_divergence(&a, &DiagGaussian::standard(1)).unwrap() - 0.5).abs() < 1e-15);
    assert!(kl_divergence(&q, &DiagGaussian::standard(3)).is_err());
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let d = rng.random_range(1..=8);
        let q = random_gaussian(&mut rng, d, 0.5, 2.0);
        let p = random_gaussian(&mut rng, d, 0.5, 2.0);
        let mc = mc_kl(&q, &p, 1_000_000, &mut rng);
        assert!((mc - kl_divergence(&q, &p).unwrap()).abs() < 0.01);
    }
}

#[test]
fn kl_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let d = rng.random_range(1..=8);
        let q = random_gaussian(&mut rng, d, 0.01, 5.0);
        let p = random_gaussian(&mut rng, d, 0.01, 5.0);
        assert!(kl_divergence(&q, &p).unwrap() >= 0.0);
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
    }
}

#[test]
fn density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let g = random_gaussian(&mut rng, 1, 0.01, 10.0);
        assert!((quadrature_mass(&g, 20_000) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn degenerate_sample_sits_on_the_mean() {
    let g = DiagGaussian::new(vec![2.0, -3.0], vec![VARIANCE_FLOOR; 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let s = g.sample(&mut rng);
        for (v, m) in s.iter().zip(g.mean()) {
            assert!((v - m).abs() <= 6.0 * VARIANCE_FLOOR.sqrt());
        }
    }
}

#[test]
fn standard_normal_sample_moments() {
    let g = DiagGaussian::<f64>::standard(1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!(mean.abs() < 0.02);
    assert!((var - 1.0).abs() < 0.03);
}

#[test]
fn reparameterized_mean_derivative_is_one() {
    // d/dμ E[μ + σ ε] by central differences over a fixed set of draws.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps: Vec<f64> = (0..1000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let expectation = |mu: f64| {
        let g = DiagGaussian::new(vec![mu], vec![0.8]).unwrap();
        eps.iter().map(|&e| g.sample_with(&[e]).unwrap()[0]).sum::<f64>() / eps.len() as f64
    };
    let h = 1e-5;
    assert!(((expectation(0.4 + h) - expectation(0.4 - h)) / (2.0 * h) - 1.0).abs() < 1e-6);

    let mut tape = Tape::new();
    let mean = tape.leaf(Tensor::vector(vec![0.4]).unwrap());
    let variance = tape.leaf(Tensor::vector(vec![0.8]).unwrap());
    let s = TapedGaussian { mean, variance }.rsample(&mut tape, Tensor::vector(vec![0.6]).unwrap()).unwrap();
    let loss = tape.sum(s).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(mean).unwrap().data(), &[1.0]);
    assert!((g.wrt(variance).unwrap().data()[0] - 0.6 / (2.0 * 0.8f64.sqrt())).abs() < 1e-15);
}

#[test]
fn sampling_is_deterministic_given_seed() {
    let g = DiagGaussian::new(vec![1.0, 2.0, 3.0], vec![0.5, 1.5, 2.5]).unwrap();
    let a = g.sample(&mut ChaCha8Rng::seed_from_u64(8));
    assert_eq!(a, g.sample(&mut ChaCha8Rng::seed_from_u64(8)));
}

#[test]
fn moment_match_cases() {
    let g = DiagGaussian::new(vec![0.5, -1.0], vec![0.2, 3.0]).unwrap();
    assert_eq!(moment_match(std::slice::from_ref(&g)).unwrap(), g);
    let a = DiagGaussian::new(vec![-1.0], vec![VARIANCE_FLOOR]).unwrap();
    let b = DiagGaussian::new(vec![1.0], vec![VARIANCE_FLOOR]).unwrap();
    let m = moment_match(&[a, b]).unwrap();
    assert_eq!(m.mean(), &[0.0]);
    assert!((m.variance()[0] - 1.0).abs() < 1e-5);
    assert!(moment_match::<f64>(&[]).is_err());
}

#[test]
fn moment_match_equals_mixture_sampling_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let comps: Vec<DiagGaussian<f64>> = (0..4).map(|_| random_gaussian(&mut rng, 2, 0.1, 1.0)).collect();
    let m = moment_match(&comps).unwrap();
    let n = 1_000_000;
    let (mut s1, mut s2) = (vec![0.0; 2], vec![0.0; 2]);
    for _ in 0..n {
        let x = comps[rng.random_range(0..comps.len())].sample(&mut rng);
        for i in 0..2 {
            s1[i] += x[i];
            s2[i] += x[i] * x[i];
        }
    }
    for i in 0..2 {
        let mean = s1[i] / n as f64;
        let var = s2[i] / n as f64 - mean * mean;
        assert!((mean - m.mean()[i]).abs() < 0.02);
        assert!((var - m.variance()[i]).abs() < 0.02);
    }
}

#[test]
fn invalid_distributions_are_rejected() {
    assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
    assert!(DiagGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
    assert!(DiagGaussian::new(vec![f64::NAN], vec![1.0]).is_err());
    let g = DiagGaussian::from_raw(vec![0.0], &[-1e3]).unwrap();
    assert!(g.variance()[0] >= VARIANCE_FLOOR);
}

proptest! {
    #[test]
    fn kl_is_zero_only_at_equality(m in -3.0f64..3.0, v in 0.05f64..5.0, dm in 0.01f64..1.0) {
        let q = DiagGaussian::new(vec![m], vec![v]).unwrap();
        let p = DiagGaussian::new(vec![m + dm], vec![v]).unwrap();
        prop_assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        prop_assert!(kl_divergence(&q, &p).unwrap() > 0.0);
    }
}
