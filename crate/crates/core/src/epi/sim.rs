use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::coarsen::AgeBracketMap;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::seeds;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 200_000;

/// Spectral radius of a nonnegative `n x n` matrix by power iteration.
///
/// Iterates on `A + I`, whose Perron root is `ρ(A) + 1` and strictly dominant
/// even when `A` is periodic. Stops once the Collatz-Wielandt bounds agree to
/// `1e-10` (relative), or once successive estimates stop moving.
pub fn spectral_radius(matrix: &[f64], n: usize) -> Result<f64> {
    if matrix.len() != n * n || n == 0 {
        return Err(Error::LengthMismatch { op: "spectral_radius", expected: n * n, actual: matrix.len() });
    }
    if matrix.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("spectral_radius expects a finite nonnegative matrix"));
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        for i in 0..n {
            let row = &matrix[i * n..(i + 1) * n];
            w[i] = v[i] + row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            if v[i] > 0.0 {
                let r = w[i] / v[i];
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        let norm: f64 = w.iter().sum();
        let est = norm / v.iter().sum::<f64>();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if hi - lo <= POWER_TOL * hi || (est - prev).abs() <= 1e-14 * est {
            return Ok(if hi - lo <= POWER_TOL * hi { 0.5 * (lo + hi) - 1.0 } else { est - 1.0 });
        }
        prev = est;
    }
    Ok(prev - 1.0)
}

/// `G_ij = M_ij N_i / N_j`, row-major.
pub fn next_generation_kernel(s: &Scenario) -> Vec<f64> {
    let a = s.n_groups();
    let mut g = vec![0.0; a * a];
    for i in 0..a {
        for j in 0..a {
            g[i * a + j] = s.contact(i, j) * s.populations[i] as f64 / s.populations[j] as f64;
        }
    }
    g
}

/// Transmissibility giving the scenario's `R_0`: `β = R_0 γ / ρ(G)`.
pub fn beta_from_r0(s: &Scenario) -> Result<f64> {
    s.validate()?;
    let rho = spectral_radius(&next_generation_kernel(s), s.n_groups())?;
    if rho <= 1e-12 {
        return Err(Error::Domain("beta_from_r0: next-generation kernel has zero spectral radius"));
    }
    Ok(s.r0 * s.gamma / rho)
}

/// Susceptible, infectious and recovered counts per age group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpiState {
    pub s: Vec<u64>,
    pub i: Vec<u64>,
    pub r: Vec<u64>,
}

impl EpiState {
    pub fn initial(s: &Scenario) -> Self {
        EpiState {
            s: s.populations.iter().zip(&s.initial_infected).map(|(n, i)| n - i).collect(),
            i: s.initial_infected.clone(),
            r: vec![0; s.n_groups()],
        }
    }

    /// `S + I + R` per group.
    pub fn totals(&self) -> Vec<u64> {
        (0..self.s.len()).map(|g| self.s[g] + self.i[g] + self.r[g]).collect()
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n, p.min(1.0)).expect("p lies in [0, 1]").sample(rng)
}

/// One day of the chain-binomial update. Returns the next state and the new
/// infections per group.
pub fn step<R: Rng + ?Sized>(
    state: &EpiState,
    beta: f64,
    gamma: f64,
    contacts: &[f64],
    populations: &[u64],
    rng: &mut R,
) -> (EpiState, Vec<u64>) {
    let a = populations.len();
    let prevalence: Vec<f64> = (0..a).map(|j| state.i[j] as f64 / populations[j] as f64).collect();
    let p_recover = -(-gamma).exp_m1();
    let mut next = state.clone();
    let mut infections = vec![0; a];
    for g in 0..a {
        let row = &contacts[g * a..(g + 1) * a];
        let lambda = beta * row.iter().zip(&prevalence).map(|(m, p)| m * p).sum::<f64>();
        let new_inf = binomial(state.s[g], -(-lambda).exp_m1(), rng);
        let new_rec = binomial(state.i[g], p_recover, rng);
        next.s[g] -= new_inf;
        next.i[g] = next.i[g] + new_inf - new_rec;
        next.r[g] += new_rec;
        infections[g] = new_inf;
    }
    (next, infections)
}

/// Daily incidence of every sample, laid out `[sample][day][group]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectorySet {
    pub n_samples: usize,
    pub horizon_days: usize,
    pub n_groups: usize,
    pub incidence: Vec<u64>,
}

impl TrajectorySet {
    pub fn get(&self, sample: usize, day: usize, group: usize) -> u64 {
        self.incidence[(sample * self.horizon_days + day) * self.n_groups + group]
    }

    /// Row-major `T x A` block of one sample.
    pub fn sample(&self, s: usize) -> &[u64] {
        let len = self.horizon_days * self.n_groups;
        &self.incidence[s * len..(s + 1) * len]
    }

    /// Total new infections per day, averaged over samples.
    pub fn mean_daily_total(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon_days];
        for s in 0..self.n_samples {
            for (t, o) in out.iter_mut().enumerate() {
                *o += (0..self.n_groups).map(|g| self.get(s, t, g)).sum::<u64>() as f64;
            }
        }
        out.iter().map(|v| v / self.n_samples.max(1) as f64).collect()
    }

    /// Sums incidence over the groups of each coarse bracket.
    pub fn coarsened(&self, map: &AgeBracketMap) -> Result<Self> {
        if map.n_fine() != self.n_groups {
            return Err(Error::LengthMismatch { op: "TrajectorySet::coarsened", expected: map.n_fine(), actual: self.n_groups });
        }
        let nc = map.n_coarse();
        let mut out = vec![0; self.n_samples * self.horizon_days * nc];
        for st in 0..self.n_samples * self.horizon_days {
            for g in 0..self.n_groups {
                out[st * nc + map.bracket_of(g)] += self.incidence[st * self.n_groups + g];
            }
        }
        Ok(TrajectorySet { n_samples: self.n_samples, horizon_days: self.horizon_days, n_groups: nc, incidence: out })
    }
}

/// Runs every sample of `scenario`; sample `s` draws from stream `s` of `seed`.
pub fn simulate(scenario: &Scenario, seed: u64) -> Result<TrajectorySet> {
    let beta = beta_from_r0(scenario)?;
    let a = scenario.n_groups();
    let t_len = scenario.horizon_days;
    let per_sample: Vec<Vec<u64>> = (0..scenario.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds::stream(seed, s as u64);
            let mut state = EpiState::initial(scenario);
            let mut out = Vec::with_capacity(t_len * a);
            for _ in 0..t_len {
                let (next, inc) = step(&state, beta, scenario.gamma, &scenario.contacts, &scenario.populations, &mut rng);
                out.extend(inc);
                state = next;
            }
            out
        })
        .collect();
    Ok(TrajectorySet { n_samples: scenario.n_samples, horizon_days: t_len, n_groups: a, incidence: per_sample.concat() })
}
