//! Labelled clustering datasets: a CSV of samples plus a manifest.
//!
//! Each CSV row is one sample; the last column is its integer label. The
//! manifest is JSON `{name, T, M, k}` and names the CSV next to it.

use std::path::{Path, PathBuf};

use ensparse_core::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    /// CSV path relative to the manifest; defaults to `<name>.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    /// `M x T`, one sample per column.
    pub samples: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(name: &str, samples: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != samples.ncols() {
            return Err(Error::data("one label per sample is required"));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            manifest: Manifest {
                name: name.to_string(),
                t: samples.ncols(),
                m: samples.nrows(),
                k,
                data: None,
            },
            samples,
            labels,
        })
    }

    fn csv_path(manifest: &Manifest, manifest_path: &Path) -> PathBuf {
        let file = manifest.data.clone().unwrap_or_else(|| format!("{}.csv", manifest.name));
        manifest_path.parent().unwrap_or(Path::new(".")).join(file)
    }

    /// Loads the manifest and its CSV, checking both agree.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", manifest_path.display())))?;
        let csv_path = Self::csv_path(&manifest, manifest_path);
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_path(&csv_path)
            .map_err(|e| Error::data(format!("{}: {e}", csv_path.display())))?;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::data(format!("{}: {e}", csv_path.display())))?;
            if rec.len() != manifest.m + 1 {
                return Err(Error::data(format!("row {i}: expected {} columns, found {}", manifest.m + 1, rec.len())));
            }
            for v in rec.iter().take(manifest.m) {
                values.push(v.trim().parse::<f64>().map_err(|_| Error::data(format!("row {i}: bad value {v:?}")))?);
            }
            let label = rec[manifest.m].trim();
            labels.push(label.parse::<usize>().map_err(|_| Error::data(format!("row {i}: bad label {label:?}")))?);
        }
        if labels.len() != manifest.t {
            return Err(Error::data(format!("manifest says T = {}, CSV has {} rows", manifest.t, labels.len())));
        }
        if labels.iter().any(|l| *l >= manifest.k) {
            return Err(Error::data(format!("labels must lie in 0..{}", manifest.k)));
        }
        let samples = DMatrix::from_vec(manifest.m, manifest.t, values);
        Ok(Self { manifest, samples, labels })
    }

    /// Writes `<dir>/<name>.json` and the CSV it names; returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let manifest_path = dir.join(format!("{}.json", self.manifest.name));
        let csv_path = Self::csv_path(&self.manifest, &manifest_path);
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::data(format!("{}: {e}", csv_path.display())))?;
        for (col, label) in self.samples.column_iter().zip(&self.labels) {
            let mut rec: Vec<String> = col.iter().map(|v| format!("{v}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec).map_err(|e| Error::data(format!("CSV: {e}")))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        Ok(manifest_path)
    }
}
