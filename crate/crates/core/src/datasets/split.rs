use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::dataset::ScenarioId;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// High-fidelity training ids are a subset of the low-fidelity ones.
    Nested,
    /// Low- and high-fidelity training ids are disjoint.
    NonNested,
}

impl SplitMode {
    pub fn tag(self) -> &'static str {
        match self {
            SplitMode::Nested => "nested",
            SplitMode::NonNested => "non-nested",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "nested" => Ok(SplitMode::Nested),
            "non-nested" | "non_nested" => Ok(SplitMode::NonNested),
            _ => Err(Error::invalid(format!("unknown split mode `{tag}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub n_train_low: usize,
    pub n_train_high: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 109 scenarios: 26 low, 5 high, 26 validation, 52 test.
    pub fn as_sir(mode: SplitMode, seed: u64) -> Self {
        SplitSpec { mode, n_train_low: 26, n_train_high: 5, n_val: 26, n_test: 52, seed }
    }

    /// 219 scenarios: 87 low, 32 high, 50 validation, 50 test.
    pub fn climate(mode: SplitMode, seed: u64) -> Self {
        SplitSpec { mode, n_train_low: 87, n_train_high: 32, n_val: 50, n_test: 50, seed }
    }

    /// Ids needed from the pool.
    pub fn required(&self) -> usize {
        let train = match self.mode {
            SplitMode::Nested => self.n_train_low,
            SplitMode::NonNested => self.n_train_low + self.n_train_high,
        };
        train + self.n_val + self.n_test
    }

    pub fn check_feasible(&self, n_ids: usize) -> Result<()> {
        if self.mode == SplitMode::Nested && self.n_train_high > self.n_train_low {
            return Err(Error::InfeasibleSplit(format!(
                "nested split needs n_train_high ({}) <= n_train_low ({})",
                self.n_train_high, self.n_train_low
            )));
        }
        if self.required() > n_ids {
            return Err(Error::InfeasibleSplit(format!("{} split needs {} ids, only {n_ids} available", self.mode.tag(), self.required())));
        }
        Ok(())
    }
}

/// Id partition; every list is sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub spec: SplitSpec,
    pub low_train: Vec<ScenarioId>,
    pub high_train: Vec<ScenarioId>,
    pub val: Vec<ScenarioId>,
    pub test: Vec<ScenarioId>,
}

impl Split {
    /// Subset/disjointness invariants for the split's mode.
    pub fn validate(&self) -> Result<()> {
        let set = |v: &[ScenarioId]| v.iter().copied().collect::<BTreeSet<_>>();
        let (low, high, val, test) = (set(&self.low_train), set(&self.high_train), set(&self.val), set(&self.test));
        if [(&low, &self.low_train), (&high, &self.high_train), (&val, &self.val), (&test, &self.test)].iter().any(|(s, v)| s.len() != v.len()) {
            return Err(Error::invalid("split lists contain duplicate ids"));
        }
        let ok = match self.spec.mode {
            SplitMode::Nested => high.is_subset(&low),
            SplitMode::NonNested => high.is_disjoint(&low),
        };
        if !ok {
            return Err(Error::invalid(format!("{} split violates its train-set relation", self.spec.mode.tag())));
        }
        let train: BTreeSet<_> = low.union(&high).copied().collect();
        if !val.is_disjoint(&train) || !test.is_disjoint(&train) || !val.is_disjoint(&test) {
            return Err(Error::invalid("validation/test ids overlap training ids or each other"));
        }
        Ok(())
    }
}

/// Shuffles `all_ids` with the spec's seed; takes test, then validation, and
/// fills the training sets from the remaining pool. Nested: low = the first
/// `n_train_low` of the pool, high = a random subset of low. Non-nested: low,
/// then the next `n_train_high` ids as high.
pub fn make_split(all_ids: &[ScenarioId], spec: &SplitSpec) -> Result<Split> {
    let unique: BTreeSet<_> = all_ids.iter().copied().collect();
    if unique.len() != all_ids.len() {
        return Err(Error::invalid("make_split: duplicate ids"));
    }
    spec.check_feasible(all_ids.len())?;
    let mut ids: Vec<ScenarioId> = unique.into_iter().collect();
    let mut rng = seeds::stream(seeds::derive_seed(spec.seed, "split", 0), 0);
    ids.shuffle(&mut rng);
    let (test, rest) = ids.split_at(spec.n_test);
    let (val, pool) = rest.split_at(spec.n_val);
    let low = pool[..spec.n_train_low].to_vec();
    let high = match spec.mode {
        SplitMode::Nested => {
            let mut l = low.clone();
            l.shuffle(&mut rng);
            l.truncate(spec.n_train_high);
            l
        }
        SplitMode::NonNested => pool[spec.n_train_low..spec.n_train_low + spec.n_train_high].to_vec(),
    };
    let sorted = |mut v: Vec<ScenarioId>| {
        v.sort_unstable();
        v
    };
    let split = Split { spec: spec.clone(), low_train: sorted(low), high_train: sorted(high), val: sorted(val.to_vec()), test: sorted(test.to_vec()) };
    split.validate()?;
    Ok(split)
}
