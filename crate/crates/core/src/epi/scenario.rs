use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, Kv, Reader};

const FORMAT: &str = "mfhnp-scenario 1";

/// Configuration of one age-stratified SIR run.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub r0: f64,
    /// Recovery rate per day.
    pub gamma: f64,
    pub populations: Vec<u64>,
    /// Row-major `A x A`; entry `(i, j)` is the mean daily contacts of an
    /// age-`i` individual with age-`j` individuals.
    pub contacts: Vec<f64>,
    pub initial_infected: Vec<u64>,
    pub horizon_days: usize,
    pub n_samples: usize,
}

impl Scenario {
    pub fn n_groups(&self) -> usize {
        self.populations.len()
    }

    pub fn contact(&self, i: usize, j: usize) -> f64 {
        self.contacts[i * self.n_groups() + j]
    }

    pub fn total_population(&self) -> u64 {
        self.populations.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.n_groups();
        let bad = |m: String| Err(Error::invalid(format!("scenario: {m}")));
        if a == 0 {
            return bad("no age groups".into());
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return bad(format!("r0 must be positive, got {}", self.r0));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.contacts.len() != a * a {
            return bad(format!("contacts must be {a}x{a}, got {} entries", self.contacts.len()));
        }
        if self.contacts.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return bad("contacts must be finite and nonnegative".into());
        }
        if self.initial_infected.len() != a {
            return bad(format!("initial_infected has {} groups, expected {a}", self.initial_infected.len()));
        }
        for (g, (&n, &i0)) in self.populations.iter().zip(&self.initial_infected).enumerate() {
            if n == 0 {
                return bad(format!("group {g} has zero population"));
            }
            if i0 > n {
                return bad(format!("group {g}: {i0} initial infections exceed population {n}"));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new();
        kv.insert("format".into(), FORMAT.into());
        kv.insert("r0".into(), format!("{:e}", self.r0));
        kv.insert("gamma".into(), format!("{:e}", self.gamma));
        kv.insert("populations".into(), kv::join(&self.populations));
        kv.insert("contacts".into(), kv::join_f64(&self.contacts));
        kv.insert("initial_infected".into(), kv::join(&self.initial_infected));
        kv.insert("horizon_days".into(), self.horizon_days.to_string());
        kv.insert("n_samples".into(), self.n_samples.to_string());
        kv
    }

    pub fn from_kv(kv: &Kv) -> Result<Self> {
        let r = Reader::new(kv, "scenario");
        if r.str("format")? != FORMAT {
            return Err(Error::format(format!("scenario: unsupported format `{}`", r.str("format")?)));
        }
        let s = Scenario {
            r0: r.parse("r0")?,
            gamma: r.parse("gamma")?,
            populations: r.list("populations")?,
            contacts: r.list("contacts")?,
            initial_infected: r.list("initial_infected")?,
            horizon_days: r.parse("horizon_days")?,
            n_samples: r.parse("n_samples")?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        kv::to_text(&self.to_kv())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&kv::from_text(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
