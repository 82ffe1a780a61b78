use rand::Rng;
use rand_distr::StandardNormal;

use super::dataset::{FidelityDataset, ScenarioRecord};
use crate::error::{Error, Result};
use crate::np::Fidelity;
use crate::seeds;

pub const SYNTH_LOW_POINTS: usize = 32;
pub const SYNTH_HIGH_POINTS: usize = 64;

/// `t_k = k / (n - 1)` on `[0, 1]`.
pub fn synth_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

pub fn synth_low_curve(a: f64) -> Vec<f64> {
    synth_grid(SYNTH_LOW_POINTS).iter().map(|t| (2.0 * std::f64::consts::PI * a * t).sin()).collect()
}

pub fn synth_high_curve(a: f64) -> Vec<f64> {
    synth_grid(SYNTH_HIGH_POINTS).iter().map(|t| (2.0 * std::f64::consts::PI * a * t).sin() + 0.3 * (a - 0.5) * t * t).collect()
}

/// Parameter `a ∈ [0, 1)` of scenario `id`; shared by both levels.
pub fn synth_parameter(seed: u64, id: u64) -> f64 {
    seeds::stream(seeds::derive_seed(seed, "synth-param", id), 0).random::<f64>()
}

fn level(level: Fidelity, n: usize, samples: usize, noise: f64, seed: u64) -> Result<FidelityDataset> {
    let (domain, width) = match level {
        Fidelity::Low => ("synth-low", SYNTH_LOW_POINTS),
        Fidelity::High => ("synth-high", SYNTH_HIGH_POINTS),
    };
    let scenarios = (0..n as u64)
        .map(|id| {
            let a = synth_parameter(seed, id);
            let curve = if level == Fidelity::Low { synth_low_curve(a) } else { synth_high_curve(a) };
            let mut rng = seeds::stream(seeds::derive_seed(seed, domain, id), 0);
            let y_samples = (0..samples)
                .map(|_| curve.iter().map(|&c| c + noise * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            ScenarioRecord { id, x: vec![a], y_samples }
        })
        .collect();
    FidelityDataset::new(level, 1, width, scenarios)
}

/// Two-fidelity 1-D task: ids `0..n_low` at the low level and `0..n_high` at
/// the high level share the parameter `a`.
pub fn synth_task(n_low: usize, n_high: usize, samples: usize, noise: f64, seed: u64) -> Result<(FidelityDataset, FidelityDataset)> {
    if n_low == 0 || n_high == 0 || samples == 0 {
        return Err(Error::invalid("synth_task needs at least one scenario per level and one sample"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("synth_task noise must be finite and nonnegative"));
    }
    Ok((level(Fidelity::Low, n_low, samples, noise, seed)?, level(Fidelity::High, n_high, samples, noise, seed)?))
}
