use mfhnp_core::aggregation::{bayesian_aggregate, mean_aggregate, BaPrior, LatentObservation};
use mfhnp_core::numerics::{Activation, Mlp, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::oracles::{random_ba_case, sequential_ba};

fn head(seed: u64, d_r: usize, d_z: usize) -> Mlp<f64> {
    Mlp::new(&[d_r, 8, 2 * d_z], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn ma_identical_observations_equal_single_copy() {
    let h = head(1, 3, 2);
    let o = LatentObservation::mean_only(vec![0.3, -0.7, 1.1]);
    let one = mean_aggregate(std::slice::from_ref(&o), &h).unwrap();
    let many = mean_aggregate(&vec![o; 5], &h).unwrap();
    for (a, b) in one.mean().iter().zip(many.mean()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn ma_two_observations_use_the_manual_average() {
    let h = head(2, 3, 2);
    let (r1, r2) = (vec![0.2, 0.4, -1.0], vec![1.0, -0.6, 0.5]);
    let avg: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| (a + b) / 2.0).collect();
    let out = h.forward(&Tensor::matrix(1, 3, avg).unwrap()).unwrap().into_data();
    let sp = |x: f64| x.exp().ln_1p() + mfhnp_core::gaussian::VARIANCE_FLOOR;
    let got = mean_aggregate(&[LatentObservation::mean_only(r1), LatentObservation::mean_only(r2)], &h).unwrap();
    for j in 0..2 {
        assert!((got.mean()[j] - out[j]).abs() < 1e-14);
        assert!((got.variance()[j] - sp(out[2 + j])).abs() < 1e-14);
    }
}

#[test]
fn ma_needs_context() {
    assert!(mean_aggregate(&[], &head(3, 3, 2)).is_err());
}

#[test]
fn ba_empty_returns_prior_exactly() {
    let prior = BaPrior::new(vec![0.5, -2.0], vec![0.3, 4.0], true).unwrap();
    let post = bayesian_aggregate(&prior, &[]).unwrap();
    assert_eq!((post.mean(), post.variance()), (&prior.mean0[..], &prior.variance0[..]));
}

#[test]
fn ba_single_observation_formula() {
    let prior = BaPrior::<f64>::standard(2);
    let (r, v): (Vec<f64>, Vec<f64>) = (vec![1.5, -0.5], vec![0.5, 2.0]);
    let post = bayesian_aggregate(&prior, &[LatentObservation::with_variance(r.clone(), v.clone()).unwrap()]).unwrap();
    for j in 0..2 {
        let var = 1.0 / (1.0 + 1.0 / v[j]);
        assert!((post.variance()[j] - var).abs() < 1e-15);
        assert!((post.mean()[j] - var * r[j] / v[j]).abs() < 1e-15);
    }
}

#[test]
fn ba_batch_equals_sequential_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let (prior, obs) = random_ba_case(&mut rng, 20);
        let post = bayesian_aggregate(&prior, &obs).unwrap();
        let (m, v) = sequential_ba(&prior, &obs);
        for j in 0..m.len() {
            assert!((post.mean()[j] - m[j]).abs() < 1e-10);
            assert!((post.variance()[j] - v[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn ba_properties_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let (prior, mut obs) = random_ba_case(&mut rng, 20);
        let post = bayesian_aggregate(&prior, &obs).unwrap();
        for j in 0..prior.dim() {
            assert!(post.variance()[j] <= prior.variance0[j]);
            let lo = obs.iter().map(|o| o.r[j]).fold(prior.mean0[j], f64::min);
            let hi = obs.iter().map(|o| o.r[j]).fold(prior.mean0[j], f64::max);
            assert!(post.mean()[j] >= lo - 1e-12 && post.mean()[j] <= hi + 1e-12);
        }
        obs.shuffle(&mut rng);
        let shuffled = bayesian_aggregate(&prior, &obs).unwrap();
        assert_eq!(bits(post.mean()), bits(shuffled.mean()));
        assert_eq!(bits(post.variance()), bits(shuffled.variance()));
    }
}

#[test]
fn ba_doubling_variance_moves_mean_away() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    while checked < 200 {
        let (prior, obs) = random_ba_case(&mut rng, 8);
        if obs.len() < 2 {
            continue;
        }
        let k = rng.random_range(0..obs.len());
        let before = bayesian_aggregate(&prior, &obs).unwrap();
        let mut changed = obs.clone();
        let v: Vec<f64> = changed[k].obs_variance.as_ref().unwrap().iter().map(|v| 2.0 * v).collect();
        changed[k] = LatentObservation::with_variance(changed[k].r.clone(), v).unwrap();
        let after = bayesian_aggregate(&prior, &changed).unwrap();
        for j in 0..prior.dim() {
            let (d0, d1) = ((before.mean()[j] - obs[k].r[j]).abs(), (after.mean()[j] - obs[k].r[j]).abs());
            if d0 > 1e-9 {
                assert!(d1 > d0, "{d1} <= {d0}");
            }
        }
        checked += 1;
    }
}

#[test]
fn ma_is_bit_exactly_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = head(8, 4, 3);
    for _ in 0..200 {
        let n = rng.random_range(1..15);
        let mut obs: Vec<_> = (0..n).map(|_| LatentObservation::mean_only((0..4).map(|_| rng.random_range(-3.0..3.0)).collect())).collect();
        let a = mean_aggregate(&obs, &h).unwrap();
        obs.shuffle(&mut rng);
        let b = mean_aggregate(&obs, &h).unwrap();
        assert_eq!(bits(a.mean()), bits(b.mean()));
        assert_eq!(bits(a.variance()), bits(b.variance()));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(LatentObservation::with_variance(vec![0.0], vec![0.0]).is_err());
    assert!(LatentObservation::with_variance(vec![0.0, 1.0], vec![1.0]).is_err());
    assert!(BaPrior::new(vec![0.0], vec![-1.0], false).is_err());
    let prior = BaPrior::<f64>::standard(2);
    let obs = LatentObservation::with_variance(vec![0.0; 3], vec![1.0; 3]).unwrap();
    assert!(bayesian_aggregate(&prior, &[obs]).is_err());
    assert!(bayesian_aggregate(&prior, &[LatentObservation::mean_only(vec![0.0; 2])]).is_err());
}

proptest! {
    #[test]
    fn ba_precision_accumulates(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (prior, obs) = random_ba_case(&mut rng, 12);
        let post = bayesian_aggregate(&prior, &obs).unwrap();
        for j in 0..prior.dim() {
            let precision = 1.0 / prior.variance0[j] + obs.iter().map(|o| 1.0 / o.obs_variance.as_ref().unwrap()[j]).sum::<f64>();
            prop_assert!((1.0 / post.variance()[j] - precision).abs() <= 1e-9 * precision);
        }
    }
}
