//! Flat `key = value` text records with sorted keys.

use std::collections::BTreeMap;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Kv = BTreeMap<String, String>;

/// One `key = value` line per entry, keys sorted. Blank lines and `#` comments are skipped on read.
pub fn to_text(kv: &Kv) -> String {
    let mut s = String::new();
    for (k, v) in kv {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(v);
        s.push('\n');
    }
    s
}

pub fn from_text(text: &str) -> Result<Kv> {
    let mut kv = Kv::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::format(format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::format(format!("line {}: empty key", n + 1)));
        }
        if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::format(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(kv)
}

/// Hex SHA-256 of the canonical text form.
pub fn digest(kv: &Kv) -> String {
    let hash = Sha256::digest(to_text(kv).as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Typed lookups with the record name in error messages.
pub(crate) struct Reader<'a> {
    kv: &'a Kv,
    what: &'a str,
}

impl<'a> Reader<'a> {
    pub fn new(kv: &'a Kv, what: &'a str) -> Self {
        Reader { kv, what }
    }

    pub fn str(&self, key: &str) -> Result<&'a str> {
        self.kv.get(key).map(String::as_str).ok_or_else(|| Error::format(format!("{}: missing `{key}`", self.what)))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let s = self.str(key)?;
        s.parse().map_err(|_| Error::format(format!("{}: cannot parse `{key}` = `{s}`", self.what)))
    }

    /// Whitespace-separated list; empty value gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.str(key)?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format(format!("{}: bad entry `{t}` in `{key}`", self.what))))
            .collect()
    }
}

/// Space-joined list using `Display`.
pub(crate) fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Space-joined floats in shortest round-trip form.
pub(crate) fn join_f64(items: &[f64]) -> String {
    items.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}
