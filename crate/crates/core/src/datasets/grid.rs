//! Monthly grid ingestion.
//!
//! Input layout: `<dir>/low/` and `<dir>/high/`, each holding one file per
//! month whose names sort chronologically (for example `1980-01.grid`). A
//! grid file starts with a line `H W`, followed by `H` lines of `W`
//! whitespace-separated values.

use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::{FidelityDataset, ScenarioRecord};
use crate::error::{Error, Result};
use crate::np::Fidelity;

/// One month of gridded values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::LengthMismatch { op: "Grid::new", expected: height * width, actual: values.len() });
        }
        Ok(Grid { height, width, values })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.height, self.width);
        for row in self.values.chunks(self.width.max(1)) {
            s.push_str(&row.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format("grid file is empty"))?;
        let dims: Vec<usize> = header.split_whitespace().map(|t| t.parse().map_err(|_| Error::format(format!("bad grid header `{header}`")))).collect::<Result<_>>()?;
        let [height, width] = dims[..] else {
            return Err(Error::format(format!("grid header must be `H W`, got `{header}`")));
        };
        let mut values = Vec::with_capacity(height * width);
        let mut rows = 0;
        for l in lines {
            let row: Vec<f64> = l.split_whitespace().map(|t| t.parse().map_err(|_| Error::format(format!("bad grid value `{t}`")))).collect::<Result<_>>()?;
            if row.len() != width {
                return Err(Error::format(format!("ragged grid: row {rows} has {} values, expected {width}", row.len())));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != height {
            return Err(Error::format(format!("ragged grid: {rows} rows, expected {height}")));
        }
        Grid::new(height, width, values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Window geometry. `stride` defaults to `months_in + months_out`, i.e. non-overlapping windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Windowing {
    pub months_in: usize,
    pub months_out: usize,
    pub stride: usize,
}

impl Default for Windowing {
    fn default() -> Self {
        Windowing { months_in: 6, months_out: 6, stride: 12 }
    }
}

impl Windowing {
    pub fn span(&self) -> usize {
        self.months_in + self.months_out
    }

    /// Start month of every complete window.
    pub fn starts(&self, n_months: usize) -> Vec<usize> {
        if n_months < self.span() {
            return Vec::new();
        }
        (0..=n_months - self.span()).step_by(self.stride).collect()
    }
}

fn month_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file());
    files.sort();
    Ok(files)
}

fn level_dataset(dir: &Path, level: Fidelity, win: &Windowing) -> Result<(FidelityDataset, Vec<String>)> {
    let files = month_files(dir)?;
    if files.len() < win.span() {
        return Err(Error::invalid(format!("{} holds {} months; a window needs {}", dir.display(), files.len(), win.span())));
    }
    let grids = files.iter().map(|p| Grid::read(p)).collect::<Result<Vec<_>>>()?;
    let (h, w) = (grids[0].height, grids[0].width);
    if let Some((i, g)) = grids.iter().enumerate().find(|(_, g)| (g.height, g.width) != (h, w)) {
        return Err(Error::format(format!("ragged grids: month {i} is {}x{}, month 0 is {h}x{w}", g.height, g.width)));
    }
    let block = |start: usize, len: usize| grids[start..start + len].iter().flat_map(|g| g.values.iter().copied()).collect::<Vec<_>>();
    let scenarios = win
        .starts(grids.len())
        .into_iter()
        .enumerate()
        .map(|(k, s)| ScenarioRecord { id: k as u64, x: block(s, win.months_in), y_samples: vec![block(s + win.months_in, win.months_out)] })
        .collect();
    let names = files.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    let d = FidelityDataset::new(level, win.months_in * h * w, win.months_out * h * w, scenarios)?;
    Ok((d, names))
}

/// Windows both levels into scenarios: `x` is the flattened input block
/// (month-major, then row-major), `y` the following output block.
pub fn ingest_grid(dir: &Path, win: &Windowing) -> Result<(FidelityDataset, FidelityDataset)> {
    if win.stride == 0 || win.months_in == 0 || win.months_out == 0 {
        return Err(Error::invalid("window lengths and stride must be positive"));
    }
    let (low, low_names) = level_dataset(&dir.join("low"), Fidelity::Low, win)?;
    let (high, high_names) = level_dataset(&dir.join("high"), Fidelity::High, win)?;
    if low_names != high_names {
        return Err(Error::invalid("low and high grid directories must list the same months"));
    }
    Ok((low, high))
}
