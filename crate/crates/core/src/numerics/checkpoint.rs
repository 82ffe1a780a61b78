//! Plain-text parameter container.
//!
//! ```text
//! mfhnp-checkpoint 1
//! scalar f64
//! header <key> <value>
//! tensor <name> <rank> <dims...>
//! <values, space separated>
//! ```
//!
//! Header keys are written sorted; tensors keep insertion order. Values use the
//! shortest representation that parses back to the same bits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "mfhnp-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    header: BTreeMap<String, String>,
    tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Default for Checkpoint<T> {
    fn default() -> Self {
        Checkpoint { header: BTreeMap::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_header(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.header.insert(key.into(), value.into());
    }

    pub fn header(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(format!("checkpoint header `{key}` missing")))
    }

    pub fn headers(&self) -> &BTreeMap<String, String> {
        &self.header
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.push((name.into(), t));
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format(format!("checkpoint tensor `{name}` missing")))
    }

    pub fn tensors(&self) -> &[(String, Tensor<T>)] {
        &self.tensors
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\nscalar {}\n", T::TAG);
        for (k, v) in &self.header {
            out.push_str(&format!("header {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            let mut head = vec!["tensor".to_string(), name.clone(), t.shape().len().to_string()];
            head.extend(t.shape().iter().map(|d| d.to_string()));
            out.push_str(&head.join(" "));
            out.push('\n');
            let vals: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| Error::format("empty checkpoint"))?;
        match first.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
            Some((MAGIC, v)) => return Err(Error::format(format!("unsupported checkpoint version {v}"))),
            _ => return Err(Error::format("not a checkpoint file")),
        }
        match lines.next() {
            Some(l) if l.trim() == format!("scalar {}", T::TAG) => {}
            other => return Err(Error::format(format!("scalar type mismatch: {other:?}, expected {}", T::TAG))),
        }
        let mut ckpt = Checkpoint::new();
        while let Some(line) = lines.next() {
            if let Some(rest) = line.strip_prefix("header ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.header.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| Error::format("tensor without a name"))?;
                let rank: usize = parse_field(parts.next(), "tensor rank")?;
                let shape = (0..rank).map(|_| parse_field(parts.next(), "tensor dim")).collect::<Result<Vec<usize>>>()?;
                let values = lines.next().ok_or_else(|| Error::format(format!("truncated tensor `{name}`")))?;
                let data = values
                    .split_whitespace()
                    .map(|v| v.parse::<T>().map_err(|_| Error::format(format!("bad value `{v}` in `{name}`"))))
                    .collect::<Result<Vec<T>>>()?;
                ckpt.tensors.push((name.to_string(), Tensor::new(shape, data)?));
            } else if !line.trim().is_empty() {
                return Err(Error::format(format!("unexpected line `{line}`")));
            }
        }
        Ok(ckpt)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn parse_field<F: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<F> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::format(format!("missing or invalid {what}")))
}
