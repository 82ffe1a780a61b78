use rayon::prelude::*;

use super::dataset::{FidelityDataset, ScenarioRecord};
use crate::epi::{featurize, simulate, AgeBracketMap, ScenarioFamily};
use crate::error::Result;
use crate::np::Fidelity;
use crate::seeds;

/// Simulates `n` family scenarios at full resolution (high) and on the
/// coarsened brackets (low). Scenario `i` has id `i` at both levels.
pub fn epi_task(family: &ScenarioFamily, map: &AgeBracketMap, n: usize, seed: u64) -> Result<(FidelityDataset, FidelityDataset)> {
    let pairs: Vec<(ScenarioRecord, ScenarioRecord)> = (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let hi = family.scenario(seed, id)?;
            let lo = hi.coarsened(map)?;
            let (x_h, y_h) = featurize(&hi, &simulate(&hi, seeds::derive_seed(seed, "epi-high", id))?)?;
            let (x_l, y_l) = featurize(&lo, &simulate(&lo, seeds::derive_seed(seed, "epi-low", id))?)?;
            Ok((ScenarioRecord { id, x: x_l, y_samples: y_l }, ScenarioRecord { id, x: x_h, y_samples: y_h }))
        })
        .collect::<Result<_>>()?;
    let (low, high): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let (a_h, a_l, t) = (family.n_groups, map.n_coarse(), family.horizon_days);
    Ok((
        FidelityDataset::new(Fidelity::Low, crate::epi::feature_width(a_l), t * a_l, low)?,
        FidelityDataset::new(Fidelity::High, crate::epi::feature_width(a_h), t * a_h, high)?,
    ))
}
