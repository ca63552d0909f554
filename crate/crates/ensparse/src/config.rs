//! Experiment configuration.
//!
//! Values come from a TOML file, then `ENSPARSE_`-prefixed environment
//! variables, then command-line overrides, each layer replacing the previous.
//! Nested keys use `__` in variable names (`ENSPARSE_TRAIN__K=128`) and dots
//! on the command line (`--set train.k=128`). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};

pub const ENV_PREFIX: &str = "ENSPARSE_";

/// Name of the resolved configuration written next to every run's results.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    AltOpt,
    RandExAv,
    BoostEx,
    BoostKm,
    ExMld,
    L1Graph,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::AltOpt,
        Method::RandExAv,
        Method::BoostEx,
        Method::BoostKm,
        Method::ExMld,
        Method::L1Graph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::AltOpt => "altopt",
            Method::RandExAv => "randexav",
            Method::BoostEx => "boostex",
            Method::BoostKm => "boostkm",
            Method::ExMld => "exmld",
            Method::L1Graph => "l1graph",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoderKind {
    Lasso,
    OneSparse,
}

/// Where training patches come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// PGM/PNG files; empty means procedurally generated scenes.
    pub images: Vec<PathBuf>,
    pub synthetic_images: usize,
    pub synthetic_size: usize,
    pub synthetic_seed: u64,
    pub patch: usize,
    pub stride: usize,
    /// Patches kept, evenly spaced over all extracted ones.
    pub max_patches: usize,
    pub variance_floor: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            synthetic_images: 20,
            synthetic_size: 64,
            synthetic_seed: 7,
            patch: 8,
            stride: 4,
            max_patches: 2000,
            variance_floor: ensparse_core::restoration::TRAINING_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub k: usize,
    pub l: usize,
    pub lambda_train: f64,
    /// K-Means|| candidates per round; 0 means `2K`.
    pub q: usize,
    pub s: usize,
    pub altopt_iterations: usize,
    pub levels: usize,
    pub atoms_per_level: usize,
    /// Measurements of the random projection applied to training data
    /// by boosted trainers; 0 trains on clean patches.
    pub measurements: usize,
    pub operator_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::BoostKm,
            k: 64,
            l: 10,
            lambda_train: 0.1,
            q: 0,
            s: 5,
            altopt_iterations: 100,
            levels: 8,
            atoms_per_level: 16,
            measurements: 0,
            operator_seed: 999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverConfig {
    /// Models to evaluate; empty trains one from `[train]` per measurement count.
    pub models: Vec<PathBuf>,
    /// Test images; empty means the built-in scenes.
    pub images: Vec<PathBuf>,
    pub synthetic_images: usize,
    pub synthetic_size: usize,
    pub measurements: Vec<usize>,
    pub seeds: usize,
    pub lambda_test: f64,
    pub save_images: bool,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            images: Vec::new(),
            synthetic_images: 2,
            synthetic_size: 128,
            measurements: vec![8, 16, 32],
            seeds: 3,
            lambda_test: 0.1,
            save_images: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperresConfig {
    /// A trained paired model; unset trains one with the settings below.
    pub model: Option<PathBuf>,
    pub method: Method,
    pub images: Vec<PathBuf>,
    pub synthetic_images: usize,
    pub synthetic_size: usize,
    pub training_images: Vec<PathBuf>,
    pub synthetic_training_images: usize,
    pub synthetic_training_size: usize,
    pub scale: usize,
    pub patch: usize,
    pub stride: usize,
    pub feature_floor: f64,
    pub max_pairs: usize,
    pub k: usize,
    pub l: usize,
    pub coder: CoderKind,
    pub lambda_train: f64,
    pub lambda_test: f64,
    /// Gradient steps of the consistency refinement; 0 disables it.
    pub back_projection_iterations: usize,
    pub back_projection_c: f64,
    pub save_images: bool,
}

impl Default for SuperresConfig {
    fn default() -> Self {
        Self {
            model: None,
            method: Method::BoostEx,
            images: Vec::new(),
            synthetic_images: 3,
            synthetic_size: 96,
            training_images: Vec::new(),
            synthetic_training_images: 20,
            synthetic_training_size: 64,
            scale: 2,
            patch: 5,
            stride: 2,
            feature_floor: 1e-4,
            max_pairs: 20000,
            k: 1024,
            l: 50,
            coder: CoderKind::OneSparse,
            lambda_train: 0.15,
            lambda_test: 0.2,
            back_projection_iterations: 20,
            back_projection_c: 1.0,
            save_images: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticClusters {
    pub m: usize,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticClusters {
    fn default() -> Self {
        Self {
            m: 20,
            classes: 2,
            dim: 3,
            per_class: 100,
            noise: 0.01,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Dataset manifest; unset uses the synthetic union of subspaces.
    pub dataset: Option<PathBuf>,
    pub synthetic: SyntheticClusters,
    pub methods: Vec<Method>,
    pub seeds: usize,
    pub lambda: f64,
    /// Atoms per ensemble dictionary; 0 means `T / 4`.
    pub k: usize,
    pub l: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic: SyntheticClusters::default(),
            methods: vec![Method::L1Graph, Method::RandExAv, Method::BoostEx, Method::BoostKm],
            seeds: 20,
            lambda: ensparse_core::clustering::DEFAULT_LAMBDA,
            k: 0,
            l: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Dictionary sizes of the constraint-case sweep.
    pub ks: Vec<usize>,
    pub l: usize,
    /// Dictionary size of the per-method comparison.
    pub method_k: usize,
    pub methods: Vec<Method>,
    pub lambda_train: f64,
    pub lambda_test: f64,
    pub test_patches: usize,
    pub test_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            ks: vec![64, 256, 1024],
            l: 20,
            method_k: 256,
            methods: vec![Method::RandExAv, Method::BoostEx, Method::BoostKm],
            lambda_train: 0.1,
            lambda_test: 0.2,
            test_patches: 200,
            test_seed: 99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out: PathBuf,
    /// Where `train` writes its model; unset means `<out>/model.ens`.
    pub model: Option<PathBuf>,
    /// Format of reconstructed images written by `recover` and `superres`.
    pub image_format: ImageFormat,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub recover: RecoverConfig,
    pub superres: SuperresConfig,
    pub cluster: ClusterConfig,
    pub oracle: OracleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            out: PathBuf::from("out"),
            model: None,
            image_format: ImageFormat::Pgm,
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            recover: RecoverConfig::default(),
            superres: SuperresConfig::default(),
            cluster: ClusterConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `path` (already split) in `table`, creating intermediate tables.
fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| Error::config("empty key"))?;
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("{p} is not a table")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Layers configuration sources in precedence order.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    table: Table,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let t: Table = text
            .parse()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        merge(&mut self.table, t);
        Ok(self)
    }

    /// Applies `ENSPARSE_*` variables from `vars`.
    pub fn env(mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut vars: Vec<_> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (k, v) in vars {
            let path: Vec<String> = k[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
            set_path(&mut self.table, &path, parse_value(&v))?;
        }
        Ok(self)
    }

    /// Applies one `dotted.key=value` override.
    pub fn set(mut self, assignment: &str) -> Result<Self> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
        let path: Vec<String> = k.trim().split('.').map(str::to_string).collect();
        set_path(&mut self.table, &path, parse_value(v.trim()))?;
        Ok(self)
    }

    pub fn value(mut self, dotted: &str, value: Value) -> Result<Self> {
        let path: Vec<String> = dotted.split('.').map(str::to_string).collect();
        set_path(&mut self.table, &path, value)?;
        Ok(self)
    }

    pub fn build(self) -> Result<Config> {
        let config: Config = Value::Table(self.table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be a positive number")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        nonzero("corpus.patch", c.patch)?;
        nonzero("corpus.stride", c.stride)?;
        nonzero("corpus.max_patches", c.max_patches)?;
        if c.images.is_empty() {
            nonzero("corpus.synthetic_images", c.synthetic_images)?;
            if c.synthetic_size < c.patch {
                return Err(Error::config("corpus.synthetic_size must be at least corpus.patch"));
            }
        }
        if !(c.variance_floor >= 0.0) {
            return Err(Error::config("corpus.variance_floor must be non-negative"));
        }
        let t = &self.train;
        nonzero("train.k", t.k)?;
        nonzero("train.l", t.l)?;
        nonzero("train.s", t.s)?;
        nonzero("train.levels", t.levels)?;
        nonzero("train.atoms_per_level", t.atoms_per_level)?;
        positive("train.lambda_train", t.lambda_train)?;
        if t.method == Method::L1Graph {
            return Err(Error::config("l1graph is a clustering method, not a trainer"));
        }
        if t.measurements > c.patch * c.patch {
            return Err(Error::config("train.measurements exceeds the patch dimension"));
        }
        let r = &self.recover;
        nonzero("recover.seeds", r.seeds)?;
        positive("recover.lambda_test", r.lambda_test)?;
        if r.measurements.is_empty() {
            return Err(Error::config("recover.measurements is empty"));
        }
        let s = &self.superres;
        if s.scale < 2 {
            return Err(Error::config("superres.scale must be at least 2"));
        }
        nonzero("superres.patch", s.patch)?;
        nonzero("superres.stride", s.stride)?;
        nonzero("superres.k", s.k)?;
        nonzero("superres.l", s.l)?;
        positive("superres.lambda_train", s.lambda_train)?;
        positive("superres.lambda_test", s.lambda_test)?;
        if !matches!(s.method, Method::RandExAv | Method::BoostEx) {
            return Err(Error::config("superres.method must be randexav or boostex"));
        }
        let k = &self.cluster;
        nonzero("cluster.seeds", k.seeds)?;
        nonzero("cluster.l", k.l)?;
        positive("cluster.lambda", k.lambda)?;
        if k.methods.is_empty() {
            return Err(Error::config("cluster.methods is empty"));
        }
        if let Some(m) = k.methods.iter().find(|m| matches!(m, Method::AltOpt | Method::ExMld)) {
            return Err(Error::config(format!("{} is not a clustering method", m.name())));
        }
        let o = &self.oracle;
        nonzero("oracle.l", o.l)?;
        nonzero("oracle.test_patches", o.test_patches)?;
        positive("oracle.lambda_train", o.lambda_train)?;
        positive("oracle.lambda_test", o.lambda_test)?;
        if let Some(m) = o
            .methods
            .iter()
            .find(|m| !matches!(m, Method::RandExAv | Method::BoostEx | Method::BoostKm))
        {
            return Err(Error::config(format!("{} has no oracle comparison", m.name())));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }
}
