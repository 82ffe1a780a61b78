//! On-disk dataset directories.
//!
//! ```text
//! <dir>/manifest.txt   key = value lines: format, widths, counts, split ids, meta.*
//! <dir>/low.txt        records at the low fidelity
//! <dir>/high.txt       records at the high fidelity
//! ```
//!
//! A record file is a header followed by one block per scenario:
//!
//! ```text
//! mfhnp-records 1
//! level low
//! n_scenarios 2
//! d_x 3
//! d_y 4
//! n_samples 2
//! scenario 17
//! x <d_x values>
//! y <d_y values>      (n_samples lines)
//! ```
//!
//! Numbers are written as 17-significant-digit scientific decimals, which
//! read back to the same bits.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::dataset::{FidelityDataset, ScenarioId, ScenarioRecord};
use super::split::{Split, SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::kv::{self, Kv, Reader};
use crate::np::Fidelity;

pub const MANIFEST: &str = "manifest.txt";
const FORMAT: &str = "mfhnp-dataset 1";
const RECORDS_MAGIC: &str = "mfhnp-records 1";
const LOCK: &str = ".lock";

/// Both fidelity levels, an optional split and free-form `meta.*` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredDataset {
    pub low: FidelityDataset,
    pub high: FidelityDataset,
    pub split: Option<Split>,
    pub meta: Kv,
}

/// Exclusive write lock on a dataset directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn line(tag: &str, values: &[f64]) -> String {
    let mut s = String::from(tag);
    for &v in values {
        s.push(' ');
        s.push_str(&num(v));
    }
    s.push('\n');
    s
}

pub fn records_to_text(d: &FidelityDataset) -> String {
    let mut s = format!(
        "{RECORDS_MAGIC}\nlevel {}\nn_scenarios {}\nd_x {}\nd_y {}\nn_samples {}\n",
        d.level.tag(),
        d.scenarios.len(),
        d.d_x,
        d.d_y,
        d.n_samples()
    );
    for r in &d.scenarios {
        s.push_str(&format!("scenario {}\n", r.id));
        s.push_str(&line("x", &r.x));
        for y in &r.y_samples {
            s.push_str(&line("y", y));
        }
    }
    s
}

fn parse_level(tag: &str) -> Result<Fidelity> {
    match tag {
        "low" => Ok(Fidelity::Low),
        "high" => Ok(Fidelity::High),
        _ => Err(Error::format(format!("unknown fidelity `{tag}`"))),
    }
}

pub fn records_from_text(text: &str) -> Result<FidelityDataset> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines.next().ok_or_else(|| Error::format(format!("records truncated: expected {what}")))
    };
    let (_, magic) = next("header")?;
    if magic != RECORDS_MAGIC {
        return Err(Error::format(format!("unsupported records header `{magic}`")));
    }
    let mut field = |name: &str| -> Result<String> {
        let (n, l) = next(name)?;
        if l == name {
            return Ok(String::new());
        }
        l.strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| Error::format(format!("line {}: expected `{name}`", n + 1)))
    };
    let level = parse_level(&field("level")?)?;
    let count = |s: String| s.parse::<usize>().map_err(|_| Error::format(format!("bad count `{s}`")));
    let n_scen = count(field("n_scenarios")?)?;
    let d_x = count(field("d_x")?)?;
    let d_y = count(field("d_y")?)?;
    let n_samples = count(field("n_samples")?)?;
    let mut scenarios = Vec::with_capacity(n_scen);
    for _ in 0..n_scen {
        let id: ScenarioId = field("scenario")?.parse().map_err(|_| Error::format("bad scenario id"))?;
        let values = |s: String, width: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = s.split_whitespace().map(|t| t.parse().map_err(|_| Error::format(format!("bad number `{t}`")))).collect::<Result<_>>()?;
            if v.len() != width {
                return Err(Error::format(format!("scenario {id}: expected {width} values, found {}", v.len())));
            }
            Ok(v)
        };
        let x = values(field("x")?, d_x)?;
        let y_samples = (0..n_samples).map(|_| values(field("y")?, d_y)).collect::<Result<_>>()?;
        scenarios.push(ScenarioRecord { id, x, y_samples });
    }
    if let Ok((n, extra)) = next("end") {
        return Err(Error::format(format!("line {}: unexpected trailing content `{extra}`", n + 1)));
    }
    FidelityDataset::new(level, d_x, d_y, scenarios)
}

fn manifest(d: &StoredDataset) -> Kv {
    let mut kv = Kv::new();
    kv.insert("format".into(), FORMAT.into());
    for (p, ds) in [("low", &d.low), ("high", &d.high)] {
        kv.insert(format!("{p}.d_x"), ds.d_x.to_string());
        kv.insert(format!("{p}.d_y"), ds.d_y.to_string());
        kv.insert(format!("{p}.n_scenarios"), ds.scenarios.len().to_string());
        kv.insert(format!("{p}.n_samples"), ds.n_samples().to_string());
    }
    match &d.split {
        None => {
            kv.insert("split".into(), "none".into());
        }
        Some(s) => {
            kv.insert("split".into(), "present".into());
            kv.insert("split.mode".into(), s.spec.mode.tag().into());
            kv.insert("split.seed".into(), s.spec.seed.to_string());
            kv.insert("split.n_train_low".into(), s.spec.n_train_low.to_string());
            kv.insert("split.n_train_high".into(), s.spec.n_train_high.to_string());
            kv.insert("split.n_val".into(), s.spec.n_val.to_string());
            kv.insert("split.n_test".into(), s.spec.n_test.to_string());
            kv.insert("split.low_train".into(), kv::join(&s.low_train));
            kv.insert("split.high_train".into(), kv::join(&s.high_train));
            kv.insert("split.val".into(), kv::join(&s.val));
            kv.insert("split.test".into(), kv::join(&s.test));
        }
    }
    for (k, v) in &d.meta {
        kv.insert(format!("meta.{k}"), v.clone());
    }
    kv
}

fn split_from_manifest(r: &Reader) -> Result<Option<Split>> {
    match r.str("split")? {
        "none" => Ok(None),
        "present" => {
            let spec = SplitSpec {
                mode: SplitMode::from_tag(r.str("split.mode")?)?,
                n_train_low: r.parse("split.n_train_low")?,
                n_train_high: r.parse("split.n_train_high")?,
                n_val: r.parse("split.n_val")?,
                n_test: r.parse("split.n_test")?,
                seed: r.parse("split.seed")?,
            };
            let split = Split {
                spec,
                low_train: r.list("split.low_train")?,
                high_train: r.list("split.high_train")?,
                val: r.list("split.val")?,
                test: r.list("split.test")?,
            };
            split.validate()?;
            Ok(Some(split))
        }
        other => Err(Error::format(format!("manifest: bad split marker `{other}`"))),
    }
}

fn check_split_ids(d: &StoredDataset) -> Result<()> {
    let Some(s) = &d.split else { return Ok(()) };
    let missing = |ds: &FidelityDataset, ids: &[ScenarioId]| ids.iter().find(|&&id| !ds.contains(id)).copied();
    let checks = [(&d.low, &s.low_train, "low_train"), (&d.high, &s.high_train, "high_train"), (&d.high, &s.val, "val"), (&d.high, &s.test, "test")];
    for (ds, ids, name) in checks {
        if let Some(id) = missing(ds, ids) {
            return Err(Error::invalid(format!("split {name} id {id} missing from the {} fidelity records", ds.level.tag())));
        }
    }
    Ok(())
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes manifest and record files under an exclusive lock.
pub fn write_dataset(dir: &Path, d: &StoredDataset) -> Result<()> {
    if d.low.level != Fidelity::Low || d.high.level != Fidelity::High {
        return Err(Error::invalid("write_dataset expects (low, high) datasets"));
    }
    d.low.validate()?;
    d.high.validate()?;
    if let Some(s) = &d.split {
        s.validate()?;
    }
    check_split_ids(d)?;
    fs::create_dir_all(dir)?;
    let _lock = DirLock::acquire(dir)?;
    write_atomic(&dir.join("low.txt"), &records_to_text(&d.low))?;
    write_atomic(&dir.join("high.txt"), &records_to_text(&d.high))?;
    write_atomic(&dir.join(MANIFEST), &kv::to_text(&manifest(d)))?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<StoredDataset> {
    let kv = kv::from_text(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let r = Reader::new(&kv, "manifest");
    if r.str("format")? != FORMAT {
        return Err(Error::format(format!("unsupported dataset format `{}`", r.str("format")?)));
    }
    let low = records_from_text(&fs::read_to_string(dir.join("low.txt"))?)?;
    let high = records_from_text(&fs::read_to_string(dir.join("high.txt"))?)?;
    for (p, ds, level) in [("low", &low, Fidelity::Low), ("high", &high, Fidelity::High)] {
        if ds.level != level {
            return Err(Error::format(format!("{p}.txt holds {} fidelity records", ds.level.tag())));
        }
        let want = [(ds.d_x, "d_x"), (ds.d_y, "d_y"), (ds.scenarios.len(), "n_scenarios"), (ds.n_samples(), "n_samples")];
        for (actual, key) in want {
            let expected: usize = r.parse(&format!("{p}.{key}"))?;
            if expected != actual {
                return Err(Error::format(format!("manifest {p}.{key} = {expected} but records have {actual}")));
            }
        }
    }
    let split = split_from_manifest(&r)?;
    let meta = kv.iter().filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone()))).collect();
    let d = StoredDataset { low, high, split, meta };
    check_split_ids(&d)?;
    Ok(d)
}
