use std::collections::BTreeMap;

use crate::datasets::{FidelityDataset, ScenarioId, ScenarioRecord, Split};
use crate::error::{Error, Result};
use crate::np::{NpConfig, Point, Query, Variant};

/// Both fidelity levels of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub low: FidelityDataset,
    pub high: FidelityDataset,
}

impl TaskData {
    pub fn new(low: FidelityDataset, high: FidelityDataset) -> Self {
        TaskData { low, high }
    }

    /// Dataset widths must equal the model's.
    pub fn check_widths(&self, cfg: &NpConfig) -> Result<()> {
        let pairs = [
            ("low d_x", cfg.d_x_low, self.low.d_x),
            ("low d_y", cfg.d_y_low, self.low.d_y),
            ("high d_x", cfg.d_x_high, self.high.d_x),
            ("high d_y", cfg.d_y_high, self.high.d_y),
        ];
        for (op, expected, actual) in pairs {
            if expected != actual {
                return Err(Error::LengthMismatch { op, expected, actual });
            }
        }
        Ok(())
    }
}

/// Forward output transform and its inverse.
pub fn to_model_space(y: f64, log_space: bool) -> f64 {
    if log_space {
        y.ln_1p()
    } else {
        y
    }
}

pub fn from_model_space(y: f64, log_space: bool) -> f64 {
    if log_space {
        y.exp_m1()
    } else {
        y
    }
}

/// Task data mapped into model space, with lookups by id.
pub(crate) struct Prepared<'a> {
    pub cfg: &'a NpConfig,
    pub split: &'a Split,
    low: FidelityDataset,
    high: FidelityDataset,
    low_index: BTreeMap<ScenarioId, usize>,
    high_index: BTreeMap<ScenarioId, usize>,
    /// Ensemble mean of each low scenario, for MF pairing.
    low_means: BTreeMap<ScenarioId, Vec<f64>>,
}

impl<'a> Prepared<'a> {
    pub fn new(cfg: &'a NpConfig, data: &TaskData, split: &'a Split, log_space: bool) -> Result<Self> {
        data.check_widths(cfg)?;
        split.validate()?;
        data.low.validate()?;
        data.high.validate()?;
        let map = |d: &FidelityDataset| -> Result<FidelityDataset> {
            if log_space && d.scenarios.iter().flat_map(|s| s.y_samples.iter().flatten()).any(|&v| v <= -1.0) {
                return Err(Error::Domain("log-space outputs need y > -1"));
            }
            Ok(d.map_y(|v| to_model_space(v, log_space)))
        };
        let (low, high) = (map(&data.low)?, map(&data.high)?);
        let index = |d: &FidelityDataset| d.scenarios.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let low_means = if cfg.variant == Variant::Mf { low.scenarios.iter().map(|s| (s.id, s.mean_y())).collect() } else { BTreeMap::new() };
        Ok(Prepared { cfg, split, low_index: index(&low), high_index: index(&high), low, high, low_means })
    }

    pub fn low(&self, id: ScenarioId) -> Result<&ScenarioRecord> {
        self.low_index.get(&id).map(|&i| &self.low.scenarios[i]).ok_or_else(|| Error::invalid(format!("scenario {id} missing at the low level")))
    }

    pub fn high(&self, id: ScenarioId) -> Result<&ScenarioRecord> {
        self.high_index.get(&id).map(|&i| &self.high.scenarios[i]).ok_or_else(|| Error::invalid(format!("scenario {id} missing at the high level")))
    }

    pub fn n_samples_low(&self) -> usize {
        self.low.n_samples()
    }

    pub fn n_samples_high(&self) -> usize {
        self.high.n_samples()
    }

    fn paired_low(&self, id: ScenarioId, position: usize, allowed: Option<&[ScenarioId]>) -> Result<&Vec<f64>> {
        if allowed.is_some_and(|ids| ids.binary_search(&id).is_err()) {
            return Err(Error::Unpaired { index: position });
        }
        self.low_means.get(&id).ok_or(Error::Unpaired { index: position })
    }

    pub fn low_point(&self, id: ScenarioId, sample: usize) -> Result<Point<f64>> {
        let r = self.low(id)?;
        Ok(Point::new(r.x.clone(), r.y_samples[sample].clone()))
    }

    /// High point; MF pairs it with a low scenario from the low training set.
    pub fn high_point(&self, id: ScenarioId, sample: usize, position: usize) -> Result<Point<f64>> {
        let r = self.high(id)?;
        let y = r.y_samples[sample].clone();
        if self.cfg.variant == Variant::Mf {
            let yl = self.paired_low(id, position, Some(&self.split.low_train))?;
            Ok(Point::paired(r.x.clone(), y, yl.clone()))
        } else {
            Ok(Point::new(r.x.clone(), y))
        }
    }

    /// Query at a high scenario. MF queries use the low output at the same id.
    pub fn query(&self, id: ScenarioId, position: usize) -> Result<Query<f64>> {
        let r = self.high(id)?;
        if self.cfg.variant == Variant::Mf {
            Ok(Query::paired(r.x.clone(), self.paired_low(id, position, None)?.clone()))
        } else {
            Ok(Query::new(r.x.clone()))
        }
    }

    /// Evaluation contexts: sample 0 of every training scenario at each level.
    pub fn eval_contexts(&self) -> Result<(Vec<Point<f64>>, Vec<Point<f64>>)> {
        let low = if self.cfg.variant.is_hierarchical() {
            self.split.low_train.iter().map(|&id| self.low_point(id, 0)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let high = self.split.high_train.iter().enumerate().map(|(i, &id)| self.high_point(id, 0, i)).collect::<Result<_>>()?;
        Ok((low, high))
    }
}
