use super::scenario::Scenario;
use super::sim::TrajectorySet;
use crate::error::{Error, Result};

/// `d_x` for `a` age groups: `2 + 2a + a²`.
pub fn feature_width(a: usize) -> usize {
    2 + 2 * a + a * a
}

/// Inverse of [`feature_width`].
pub fn groups_for_width(d_x: usize) -> Result<usize> {
    // 2 + 2a + a² = (a + 1)² + 1
    let root = ((d_x.saturating_sub(1)) as f64).sqrt().round() as usize;
    match root.checked_sub(1) {
        Some(a) if a > 0 && feature_width(a) == d_x => Ok(a),
        _ => Err(Error::invalid(format!("{d_x} is not a valid scenario feature width"))),
    }
}

/// `[r0, gamma] ∥ I0/N ∥ N/ΣN ∥ contacts (row-major)`.
pub fn featurize_x(s: &Scenario) -> Vec<f64> {
    let total = s.total_population() as f64;
    let mut x = Vec::with_capacity(feature_width(s.n_groups()));
    x.push(s.r0);
    x.push(s.gamma);
    x.extend(s.initial_infected.iter().zip(&s.populations).map(|(&i, &n)| i as f64 / n as f64));
    x.extend(s.populations.iter().map(|&n| n as f64 / total));
    x.extend_from_slice(&s.contacts);
    x
}

/// One row-major `T x A` incidence vector per sample.
pub fn targets(traj: &TrajectorySet) -> Vec<Vec<f64>> {
    (0..traj.n_samples).map(|s| traj.sample(s).iter().map(|&v| v as f64).collect()).collect()
}

pub fn featurize(s: &Scenario, traj: &TrajectorySet) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if traj.n_groups != s.n_groups() {
        return Err(Error::LengthMismatch { op: "featurize", expected: s.n_groups(), actual: traj.n_groups });
    }
    Ok((featurize_x(s), targets(traj)))
}

/// Rebuilds a scenario from its features. The feature vector stores only
/// population shares, so the total population is supplied separately.
pub fn defeaturize(x: &[f64], total_population: u64, horizon_days: usize, n_samples: usize) -> Result<Scenario> {
    let a = groups_for_width(x.len())?;
    let shares = &x[2 + a..2 + 2 * a];
    let populations: Vec<u64> = shares.iter().map(|&f| (f * total_population as f64).round() as u64).collect();
    let initial_infected = x[2..2 + a].iter().zip(&populations).map(|(&f, &n)| (f * n as f64).round() as u64).collect();
    let s = Scenario {
        r0: x[0],
        gamma: x[1],
        populations,
        contacts: x[2 + 2 * a..].to_vec(),
        initial_infected,
        horizon_days,
        n_samples,
    };
    s.validate()?;
    Ok(s)
}
