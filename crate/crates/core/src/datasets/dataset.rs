use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::np::Fidelity;

pub type ScenarioId = u64;

/// One scenario: an input vector and its sampled outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRecord {
    pub id: ScenarioId,
    pub x: Vec<f64>,
    pub y_samples: Vec<Vec<f64>>,
}

impl ScenarioRecord {
    /// Per-dimension mean over the sample ensemble.
    pub fn mean_y(&self) -> Vec<f64> {
        let n = self.y_samples.len().max(1) as f64;
        let d = self.y_samples.first().map_or(0, Vec::len);
        let mut m = vec![0.0; d];
        for y in &self.y_samples {
            for (a, v) in m.iter_mut().zip(y) {
                *a += v;
            }
        }
        m.iter().map(|v| v / n).collect()
    }
}

/// All scenarios at one fidelity level.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityDataset {
    pub level: Fidelity,
    pub d_x: usize,
    pub d_y: usize,
    pub scenarios: Vec<ScenarioRecord>,
}

impl FidelityDataset {
    pub fn new(level: Fidelity, d_x: usize, d_y: usize, scenarios: Vec<ScenarioRecord>) -> Result<Self> {
        let d = FidelityDataset { level, d_x, d_y, scenarios };
        d.validate()?;
        Ok(d)
    }

    /// Widths, a common sample count and unique ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let samples = self.scenarios.first().map(|s| s.y_samples.len());
        for s in &self.scenarios {
            if !seen.insert(s.id) {
                return Err(Error::invalid(format!("duplicate scenario id {}", s.id)));
            }
            if s.x.len() != self.d_x {
                return Err(Error::LengthMismatch { op: "scenario x", expected: self.d_x, actual: s.x.len() });
            }
            if Some(s.y_samples.len()) != samples || s.y_samples.is_empty() {
                return Err(Error::invalid(format!("scenario {} has {} samples; all scenarios need the same nonzero count", s.id, s.y_samples.len())));
            }
            if let Some(y) = s.y_samples.iter().find(|y| y.len() != self.d_y) {
                return Err(Error::LengthMismatch { op: "scenario y", expected: self.d_y, actual: y.len() });
            }
            if s.x.iter().chain(s.y_samples.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset values"));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.y_samples.len())
    }

    pub fn ids(&self) -> Vec<ScenarioId> {
        self.scenarios.iter().map(|s| s.id).collect()
    }

    pub fn get(&self, id: ScenarioId) -> Result<&ScenarioRecord> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::invalid(format!("scenario {id} not in the {} fidelity dataset", self.level.tag())))
    }

    pub fn contains(&self, id: ScenarioId) -> bool {
        self.scenarios.iter().any(|s| s.id == id)
    }

    /// The records for `ids`, in that order.
    pub fn select(&self, ids: &[ScenarioId]) -> Result<Vec<&ScenarioRecord>> {
        ids.iter().map(|&id| self.get(id)).collect()
    }

    /// Applies `f` to every output value (for example a log transform).
    pub fn map_y(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut d = self.clone();
        d.scenarios.iter_mut().flat_map(|s| s.y_samples.iter_mut().flatten()).for_each(|v| *v = f(*v));
        d
    }
}
