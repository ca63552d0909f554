//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use toml::Value;

use crate::config::{Config, ConfigBuilder, Method};
use crate::error::{Error, Result};
use crate::experiments::{self as ex, ModelsByMeasurement};
use crate::formats::{read_model, write_model, ModelFile};
use crate::imageio::write_image;

#[derive(Debug, Parser)]
#[command(name = "ensparse", version, about = "Ensemble sparse model experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Model file: written by `train`, read by `recover` and `superres`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,

    /// Override any configuration key, e.g. `--set train.k=128`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train a patch model and write it with its training trace.
    Train,
    /// Compressive recovery of test images.
    Recover,
    /// Single-image superresolution against a bicubic baseline.
    Superres,
    /// Spectral clustering with sparse-code graphs.
    Cluster,
    /// Oracle-weight and trained-ensemble residual tables.
    OracleDemo,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

/// Layers file, `ENSPARSE_*` variables from `env`, `--set` overrides and flags.
pub fn resolve(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<Config> {
    let mut b = ConfigBuilder::new();
    if let Some(path) = &cli.config {
        b = b.file(path)?;
    }
    b = b.env(env)?;
    for s in &cli.overrides {
        b = b.set(s)?;
    }
    if let Some(seed) = cli.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::config("seed must fit in 63 bits"))?;
        b = b.value("seed", Value::Integer(seed))?;
    }
    if let Some(w) = cli.workers {
        b = b.value("workers", Value::Integer(w as i64))?;
    }
    if let Some(out) = &cli.out {
        b = b.value("out", path_value(out))?;
    }
    if let Some(model) = &cli.model {
        let key = match cli.command {
            Command::Train => "model",
            Command::Recover => "recover.models",
            Command::Superres => "superres.model",
            Command::Cluster | Command::OracleDemo => {
                return Err(Error::config("--model does not apply to this command"));
            }
        };
        let v = if cli.command == Command::Recover {
            Value::Array(vec![path_value(model)])
        } else {
            path_value(model)
        };
        b = b.value(key, v)?;
    }
    if let Some(m) = cli.method {
        let name = Value::String(m.name().into());
        b = match cli.command {
            Command::Train | Command::Recover => b.value("train.method", name)?,
            Command::Superres => b.value("superres.method", name)?,
            Command::Cluster => b.value("cluster.methods", Value::Array(vec![name]))?,
            Command::OracleDemo => b.value("oracle.methods", Value::Array(vec![name]))?,
        };
    }
    b.build()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_images(config: &Config, images: &[(String, ensparse_core::ImagePlane)]) -> Result<()> {
    if images.is_empty() {
        return Ok(());
    }
    let dir = config.out.join("images");
    create_dir(&dir)?;
    for (name, img) in images {
        write_image(&dir.join(format!("{name}.{}", config.image_format.extension())), img)?;
    }
    Ok(())
}

/// Output file names inside the run directory.
pub mod files {
    pub const MODEL: &str = "model.ens";
    pub const TRAIN_TRACE: &str = "train_trace.csv";
    pub const RECOVERY: &str = "recovery.csv";
    pub const RECOVERY_SUMMARY: &str = "recovery_summary.json";
    pub const SUPERRES: &str = "superres.csv";
    pub const SUPERRES_SUMMARY: &str = "superres_summary.json";
    pub const CLUSTER: &str = "cluster.csv";
    pub const CLUSTER_SUMMARY: &str = "cluster_summary.csv";
    pub const ORACLE_CASES: &str = "oracle_cases.csv";
    pub const ORACLE_METHODS: &str = "oracle_methods.csv";
}

fn train(config: &Config) -> Result<()> {
    let set = ex::patch_corpus(&config.corpus)?;
    let op = ex::training_operator(&config.train, set.dim())?;
    let trained = ex::train_model(&config.train, &set, op.as_ref(), config.seed)?;
    let model_path = config.model.clone().unwrap_or_else(|| config.out.join(files::MODEL));
    write_model(&model_path, &trained.model)?;
    trained.trace.write(&config.out.join(files::TRAIN_TRACE))
}

fn recover(config: &Config) -> Result<()> {
    let r = &config.recover;
    let models: ModelsByMeasurement = if r.models.is_empty() {
        let set = ex::patch_corpus(&config.corpus)?;
        ex::train_for_recovery(&config.train, &set, &r.measurements, config.seed)?
    } else {
        let loaded = r
            .models
            .iter()
            .map(|p| read_model(p).map(|m| (m.method_name().to_string(), m)))
            .collect::<Result<Vec<_>>>()?;
        r.measurements.iter().map(|&n| (n, loaded.clone())).collect()
    };
    let images = ex::named_images(&r.images, r.synthetic_images, r.synthetic_size)?;
    let run = ex::run_recovery(&models, &images, r, config.seed)?;
    run.table.write(&config.out.join(files::RECOVERY))?;
    write_json(&config.out.join(files::RECOVERY_SUMMARY), &run.summary)?;
    write_images(config, &run.images)
}

#[derive(serde::Serialize)]
struct SuperresSummary<'a> {
    schema: &'static str,
    method: &'static str,
    scale: usize,
    seed: u64,
    back_projection: Vec<(&'a str, Vec<f64>)>,
}

fn superres(config: &Config) -> Result<()> {
    let s = &config.superres;
    let model = match &s.model {
        Some(p) => match read_model(p)? {
            ModelFile::Paired(m) => m,
            _ => return Err(Error::data(format!("{} is not a superresolution model", p.display()))),
        },
        None => ex::train_superres(s, config.seed)?,
    };
    let images = ex::named_images(&s.images, s.synthetic_images, s.synthetic_size)?;
    let run = ex::run_superres(&model, &images, s, config.seed)?;
    run.table.write(&config.out.join(files::SUPERRES))?;
    let summary = SuperresSummary {
        schema: "ensparse.superres_summary/v1",
        method: model.kind().name(),
        scale: model.scale(),
        seed: config.seed,
        back_projection: run
            .traces
            .iter()
            .filter_map(|(n, t)| t.as_ref().map(|t| (n.as_str(), t.objective.clone())))
            .collect(),
    };
    write_json(&config.out.join(files::SUPERRES_SUMMARY), &summary)?;
    if s.model.is_none() {
        write_model(&config.out.join(files::MODEL), &ModelFile::Paired(model))?;
    }
    write_images(config, &run.images)
}

fn cluster(config: &Config) -> Result<()> {
    let data = ex::cluster_dataset(&config.cluster)?;
    let run = ex::run_cluster(&data, &config.cluster, config.seed)?;
    run.per_seed.write(&config.out.join(files::CLUSTER))?;
    run.summary.write(&config.out.join(files::CLUSTER_SUMMARY))
}

fn oracle_demo(config: &Config) -> Result<()> {
    let corpus = ex::patch_corpus(&config.corpus)?;
    let test = ex::held_out_patches(&config.corpus, config.oracle.test_patches, config.oracle.test_seed)?;
    let run = ex::run_oracle(&corpus, &test, &config.oracle, config.seed)?;
    run.cases.write(&config.out.join(files::ORACLE_CASES))?;
    run.methods.write(&config.out.join(files::ORACLE_METHODS))
}

/// Runs `config` for `command`, writing the resolved configuration first.
pub fn execute(command: Command, config: &Config) -> Result<()> {
    create_dir(&config.out)?;
    config.persist(&config.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Train => train(config),
        Command::Recover => recover(config),
        Command::Superres => superres(config),
        Command::Cluster => cluster(config),
        Command::OracleDemo => oracle_demo(config),
    })
}

pub fn run(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let config = resolve(cli, env)?;
    execute(cli.command, &config)
}
