use rand::Rng;

use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::seeds;

/// Generator of synthetic scenarios standing in for census-derived inputs.
///
/// Contacts are a symmetric banded random matrix (entries decay as
/// `exp(-|i-j| / bandwidth)`) plus an assortative diagonal, rescaled to a mean
/// of `daily_contacts` per person. Group populations are log-uniform and the
/// outbreak is seeded in one random group.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioFamily {
    pub n_groups: usize,
    pub horizon_days: usize,
    pub n_samples: usize,
    pub r0_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub population_range: (f64, f64),
    pub seed_infected: u64,
    /// Band width as a fraction of `n_groups`.
    pub bandwidth_fraction: f64,
    pub assortativity: f64,
    pub daily_contacts: f64,
}

impl ScenarioFamily {
    /// 85 single-year age groups, 100 days, 30 samples.
    pub fn standard() -> Self {
        ScenarioFamily {
            n_groups: 85,
            horizon_days: 100,
            n_samples: 30,
            r0_range: (1.2, 3.0),
            gamma_range: (0.1, 0.2),
            population_range: (2.0e4, 2.0e5),
            seed_infected: 10,
            bandwidth_fraction: 0.12,
            assortativity: 2.0,
            daily_contacts: 12.0,
        }
    }

    /// Same family at a different size.
    pub fn sized(n_groups: usize, horizon_days: usize, n_samples: usize) -> Self {
        ScenarioFamily { n_groups, horizon_days, n_samples, ..Self::standard() }
    }

    /// Scenario `index` of the family rooted at `seed`.
    pub fn scenario(&self, seed: u64, index: u64) -> Result<Scenario> {
        let a = self.n_groups;
        if a == 0 {
            return Err(Error::invalid("scenario family needs at least one group"));
        }
        let mut rng = seeds::stream(seeds::derive_seed(seed, "scenario-family", index), 0);
        let r0 = rng.random_range(self.r0_range.0..=self.r0_range.1);
        let gamma = rng.random_range(self.gamma_range.0..=self.gamma_range.1);
        let (lo, hi) = (self.population_range.0.ln(), self.population_range.1.ln());
        let populations: Vec<u64> = (0..a).map(|_| rng.random_range(lo..=hi).exp().round().max(1.0) as u64).collect();
        let width = (self.bandwidth_fraction * a as f64).max(0.5);
        let mut m = vec![0.0; a * a];
        for i in 0..a {
            for j in i..a {
                let band = (-((j - i) as f64) / width).exp();
                let v = band * rng.random_range(0.5..1.5) + if i == j { self.assortativity } else { 0.0 };
                m[i * a + j] = v;
                m[j * a + i] = v;
            }
        }
        let mean_row: f64 = m.iter().sum::<f64>() / a as f64;
        m.iter_mut().for_each(|v| *v *= self.daily_contacts / mean_row);
        let mut initial = vec![0; a];
        let g = rng.random_range(0..a);
        initial[g] = self.seed_infected.min(populations[g]);
        let s = Scenario { r0, gamma, populations, contacts: m, initial_infected: initial, horizon_days: self.horizon_days, n_samples: self.n_samples };
        s.validate()?;
        Ok(s)
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<Scenario>> {
        (0..n as u64).map(|i| self.scenario(seed, i)).collect()
    }
}
