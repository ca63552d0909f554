//! The pipelines behind each command, callable without the CLI.

use std::collections::BTreeMap;

use ensparse_core::clustering::{
    build_ensemble_graph, build_l1_graph, center_and_normalize, spectral_cluster, SimilarityGraph,
};
use ensparse_core::dictionaries::{learn_alt_opt, AltOptConfig};
use ensparse_core::ensemble::{
    combine, individual_approximations, solve_weights, train_boosted, train_ex_mld, train_randexav,
    ApproximationStack, BoostBuilder, BoostConfig, Coder, ExMldConfig, residual,
};
use ensparse_core::restoration::{
    bicubic_upscale, blur_decimate, compressive_recover, extract_patches, psnr, superresolve, train_paired,
    BackProjection, BackProjectionTrace, PairedModel, PairedTrainer, PairedTrainingSet, Recoverer, SisrConfig,
};
use ensparse_core::rng::split_seed;
use ensparse_core::{ConstraintCase, DMatrix, DegradationOperator, EnsembleModel, ImagePlane, TrainingSet};
use serde::Serialize;

use crate::config::{ClusterConfig, CoderKind, CorpusConfig, Method, OracleConfig, RecoverConfig, SuperresConfig, TrainConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::formats::ModelFile;
use crate::imageio::read_image;
use crate::synth;
use crate::table::{self, num, Table};

/// Test scenes use their own seeds; see [`synth::test_images`].
pub fn named_images(paths: &[std::path::PathBuf], synthetic: usize, size: usize) -> Result<Vec<(String, ImagePlane)>> {
    if paths.is_empty() {
        let all = synth::test_images(size);
        if synthetic > all.len() {
            return Err(Error::config(format!("only {} built-in test images exist", all.len())));
        }
        return Ok(all.into_iter().take(synthetic).collect());
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((name, read_image(p)?))
        })
        .collect()
}

fn corpus_images(c: &CorpusConfig) -> Result<Vec<ImagePlane>> {
    if c.images.is_empty() {
        Ok(synth::training_images(c.synthetic_images, c.synthetic_size, c.synthetic_seed))
    } else {
        c.images.iter().map(|p| read_image(p)).collect()
    }
}

fn all_patches(images: &[ImagePlane], c: &CorpusConfig) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    for img in images {
        let g = extract_patches(img, c.patch, c.stride, true, Some(c.variance_floor))?;
        data.extend_from_slice(g.patches().as_slice());
    }
    let m = c.patch * c.patch;
    Ok(DMatrix::from_vec(m, data.len() / m, data))
}

/// `count` indices spread evenly over `0..n` (all of them when `count >= n`).
pub fn evenly_spaced(n: usize, count: usize) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    (0..count).map(|i| i * n / count).collect()
}

/// Mean-removed, variance-filtered training patches, at most `max_patches`
/// of them, evenly spaced over everything extracted.
pub fn patch_corpus(c: &CorpusConfig) -> Result<TrainingSet> {
    let all = all_patches(&corpus_images(c)?, c)?;
    if all.ncols() == 0 {
        return Err(Error::data("no training patch passed the variance floor"));
    }
    let keep = evenly_spaced(all.ncols(), c.max_patches);
    Ok(TrainingSet::uniform(all.select_columns(&keep))?)
}

/// Held-out patches for evaluating patch models.
///
/// Synthetic corpora draw fresh scenes from `seed`; image corpora use the
/// patches that [`patch_corpus`] left out.
pub fn held_out_patches(c: &CorpusConfig, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let pool = if c.images.is_empty() {
        all_patches(&synth::training_images(c.synthetic_images.min(8).max(1), c.synthetic_size, seed), c)?
    } else {
        let all = all_patches(&corpus_images(c)?, c)?;
        let used = evenly_spaced(all.ncols(), c.max_patches);
        let mut mask = vec![true; all.ncols()];
        for i in used {
            mask[i] = false;
        }
        let rest: Vec<usize> = (0..all.ncols()).filter(|i| mask[*i]).collect();
        all.select_columns(&rest)
    };
    if pool.ncols() == 0 {
        return Err(Error::data("no held-out patches are available"));
    }
    Ok(pool.select_columns(&evenly_spaced(pool.ncols(), count)))
}

/// A trained model and its per-round trace.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelFile,
    /// Boosted and RandExAv rows give `||X - X_l||_F` of the first `l`
    /// models, Ex-MLD rows the residual norm after each level, Alt-Opt rows
    /// the empirical cost after each alternation.
    pub trace: Table,
}

fn randexav_trace(model: &EnsembleModel, x: &DMatrix<f64>, lambda: f64) -> Result<Table> {
    let approx = individual_approximations(model, x, Coder::Lasso { lambda }, None)?;
    let mut t = Table::new(table::TRAIN_TRACE);
    let mut sum = DMatrix::zeros(x.nrows(), x.ncols());
    for (l, c) in approx.iter().enumerate() {
        sum += c;
        let err = (x - &sum / (l + 1) as f64).norm();
        t.push(vec![(l + 1).to_string(), String::new(), num(model.betas()[l]), num(err)]);
    }
    Ok(t)
}

/// The training operator for `config`, if any.
pub fn training_operator(config: &TrainConfig, dim: usize) -> Result<Option<DegradationOperator>> {
    if config.measurements == 0 {
        return Ok(None);
    }
    Ok(Some(DegradationOperator::measurement(dim, config.measurements, config.operator_seed)?))
}

/// Trains `config.method` on `set`.
///
/// Boosted trainers code `Phi X` when `operator` is given; the others always
/// train on clean samples.
pub fn train_model(
    config: &TrainConfig,
    set: &TrainingSet,
    operator: Option<&DegradationOperator>,
    seed: u64,
) -> Result<Trained> {
    let mut trace = Table::new(table::TRAIN_TRACE);
    let model = match config.method {
        Method::AltOpt => {
            let mut c = AltOptConfig::new(config.k, config.lambda_train);
            c.iterations = config.altopt_iterations;
            c.seed = seed;
            let (d, history) = learn_alt_opt(set, &c)?;
            for (i, cost) in history.iter().enumerate() {
                trace.push(vec![(i + 1).to_string(), String::new(), "1".into(), num(*cost)]);
            }
            ModelFile::Dictionary(d)
        }
        Method::RandExAv => {
            let m = train_randexav(set, config.k, config.l, config.lambda_train, seed)?;
            trace = randexav_trace(&m, set.samples(), config.lambda_train)?;
            ModelFile::Ensemble(m)
        }
        Method::BoostEx | Method::BoostKm => {
            let builder = if config.method == Method::BoostEx {
                BoostBuilder::BoostEx
            } else {
                let q = if config.q == 0 { 2 * config.k } else { config.q };
                BoostBuilder::BoostKm { q, s: config.s }
            };
            let bc = BoostConfig::new(config.k, config.l, config.lambda_train, builder, seed);
            let (m, rounds) = train_boosted(set, &bc, operator)?;
            for (r, b) in rounds.iter().zip(m.betas().iter()) {
                trace.push(vec![(r.round + 1).to_string(), num(r.alpha), num(*b), num(r.cumulative_error)]);
            }
            ModelFile::Ensemble(m)
        }
        Method::ExMld => {
            let c = ExMldConfig {
                levels: config.levels,
                atoms_per_level: config.atoms_per_level,
                ensemble_size: config.l,
                seed,
            };
            let (m, energies) = train_ex_mld(set, &c)?;
            let t = set.len() as f64;
            for (i, e) in energies.iter().enumerate() {
                trace.push(vec![(i + 1).to_string(), String::new(), String::new(), num((e * t).sqrt())]);
            }
            ModelFile::Multilevel(m)
        }
        Method::L1Graph => return Err(Error::config("l1graph cannot be trained")),
    };
    Ok(Trained { model, trace })
}

pub fn recoverer(model: &ModelFile) -> Result<Recoverer<'_>> {
    match model {
        ModelFile::Dictionary(d) => Ok(Recoverer::Dictionary(d)),
        ModelFile::Ensemble(e) => Ok(Recoverer::Ensemble(e)),
        ModelFile::Multilevel(m) => Ok(Recoverer::Multilevel(m)),
        ModelFile::Paired(_) => Err(Error::data("a superresolution model cannot recover measurements")),
    }
}

/// Seed of the measurement matrix for seed index `index`.
pub fn measurement_seed(seed: u64, index: usize) -> u64 {
    split_seed(seed, 1_000_000 + index as u64)
}

/// Models to evaluate at one measurement count.
pub type ModelsByMeasurement = BTreeMap<usize, Vec<(String, ModelFile)>>;

/// Trains `config.method` once, or once per measurement count when the method
/// is boosted and `config.measurements == 0`.
///
/// Per-count training degrades the corpus with a projection of that count,
/// seeded from `config.operator_seed` and `n`.
pub fn train_for_recovery(config: &TrainConfig, set: &TrainingSet, ns: &[usize], seed: u64) -> Result<ModelsByMeasurement> {
    let boosted = matches!(config.method, Method::BoostEx | Method::BoostKm);
    let mut out = BTreeMap::new();
    if boosted && config.measurements == 0 {
        for &n in ns {
            let op = DegradationOperator::measurement(set.dim(), n, split_seed(config.operator_seed, n as u64))?;
            let t = train_model(config, set, Some(&op), seed)?;
            out.insert(n, vec![(config.method.name().to_string(), t.model)]);
        }
    } else {
        let op = training_operator(config, set.dim())?;
        let t = train_model(config, set, op.as_ref(), seed)?;
        for &n in ns {
            out.insert(n, vec![(config.method.name().to_string(), t.model.clone())]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverySummaryRow {
    pub method: String,
    pub n: usize,
    pub mean_psnr_db: f64,
    pub images: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverySummary {
    pub schema: &'static str,
    pub lambda_test: f64,
    pub measurement_seeds: Vec<u64>,
    pub rows: Vec<RecoverySummaryRow>,
}

#[derive(Debug, Clone)]
pub struct RecoveryRun {
    /// One row per (image, method, N, seed) plus a `mean` row per (image, method, N).
    pub table: Table,
    pub summary: RecoverySummary,
    /// `(file stem, image)` of the first seed's reconstructions.
    pub images: Vec<(String, ImagePlane)>,
}

/// Compressive recovery of every image at every N with `config.seeds`
/// measurement matrices.
pub fn run_recovery(
    models: &ModelsByMeasurement,
    images: &[(String, ImagePlane)],
    config: &RecoverConfig,
    seed: u64,
) -> Result<RecoveryRun> {
    let seeds: Vec<u64> = (0..config.seeds).map(|i| measurement_seed(seed, i)).collect();
    let mut table = Table::new(table::RECOVERY);
    let mut totals: BTreeMap<(usize, String), (f64, usize, usize)> = BTreeMap::new();
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut outputs = Vec::new();
    for (name, img) in images {
        for (&n, list) in models {
            for (method, model) in list {
                let r = recoverer(model)?;
                let mut sum = 0.0;
                for (si, &s) in seeds.iter().enumerate() {
                    let rec = compressive_recover(img, r, n, config.lambda_test, s)?;
                    sum += rec.psnr_db;
                    table.push(vec![name.clone(), method.clone(), n.to_string(), s.to_string(), num(rec.psnr_db)]);
                    if si == 0 && config.save_images {
                        outputs.push((format!("{name}_{method}_n{n}"), rec.image));
                    }
                }
                let mean = sum / seeds.len() as f64;
                table.push(vec![name.clone(), method.clone(), n.to_string(), "mean".into(), num(mean)]);
                let key = (n, method.clone());
                if !totals.contains_key(&key) {
                    order.push(key.clone());
                }
                let e = totals.entry(key).or_insert((0.0, 0, 0));
                e.0 += sum;
                e.1 += seeds.len();
                e.2 += 1;
            }
        }
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let (sum, count, imgs) = totals[&key];
            RecoverySummaryRow {
                method: key.1,
                n: key.0,
                mean_psnr_db: sum / count as f64,
                images: imgs,
                seeds: seeds.len(),
            }
        })
        .collect();
    Ok(RecoveryRun {
        table,
        summary: RecoverySummary {
            schema: "ensparse.recovery_summary/v1",
            lambda_test: config.lambda_test,
            measurement_seeds: seeds,
            rows,
        },
        images: outputs,
    })
}

pub fn sisr_config(config: &SuperresConfig) -> SisrConfig {
    SisrConfig {
        scale: config.scale,
        patch_size: config.patch,
        coder: match config.coder {
            CoderKind::Lasso => Coder::Lasso {
                lambda: config.lambda_test,
            },
            CoderKind::OneSparse => Coder::OneSparse,
        },
        back_projection: (config.back_projection_iterations > 0).then_some(BackProjection {
            c: config.back_projection_c,
            iterations: config.back_projection_iterations,
        }),
    }
}

/// Trains the paired model described by `config`.
pub fn train_superres(config: &SuperresConfig, seed: u64) -> Result<PairedModel> {
    let images: Vec<ImagePlane> = if config.training_images.is_empty() {
        synth::training_images(config.synthetic_training_images, config.synthetic_training_size, seed_base(config))
    } else {
        config.training_images.iter().map(|p| read_image(p)).collect::<Result<_>>()?
    };
    let sisr = sisr_config(config);
    let set = PairedTrainingSet::from_images(&images, &sisr, config.stride, config.feature_floor, config.max_pairs, seed)?;
    let trainer = match config.method {
        Method::RandExAv => PairedTrainer::RandExAv,
        Method::BoostEx => PairedTrainer::BoostEx,
        m => return Err(Error::config(format!("{} cannot train a superresolution model", m.name()))),
    };
    let coder = match config.coder {
        CoderKind::Lasso => Coder::Lasso {
            lambda: config.lambda_train,
        },
        CoderKind::OneSparse => Coder::OneSparse,
    };
    Ok(train_paired(&set, config.k, config.l, trainer, coder, seed)?)
}

fn seed_base(_config: &SuperresConfig) -> u64 {
    CorpusConfig::default().synthetic_seed
}

#[derive(Debug, Clone)]
pub struct SuperresRun {
    /// A `bicubic` row and a model row per image.
    pub table: Table,
    pub traces: Vec<(String, Option<BackProjectionTrace>)>,
    pub images: Vec<(String, ImagePlane)>,
}

/// Degrades each image by blur and decimation, then upscales it with bicubic
/// interpolation and with `model`.
pub fn run_superres(model: &PairedModel, images: &[(String, ImagePlane)], config: &SuperresConfig, seed: u64) -> Result<SuperresRun> {
    let sisr = sisr_config(config);
    let method = model.kind().name();
    let mut table = Table::new(table::SUPERRES);
    let mut traces = Vec::new();
    let mut outputs = Vec::new();
    for (name, img) in images {
        if img.width() % config.scale != 0 || img.height() % config.scale != 0 {
            return Err(Error::data(format!("{name}: dimensions are not multiples of the scale")));
        }
        let low = blur_decimate(img, config.scale)?;
        let bic = bicubic_upscale(&low, config.scale)?.clamped();
        let (sr, trace) = superresolve(&low, model, &sisr)?;
        let scale = config.scale.to_string();
        table.push(vec![name.clone(), "bicubic".into(), scale.clone(), seed.to_string(), num(psnr(img, &bic)?)]);
        table.push(vec![name.clone(), method.into(), scale, seed.to_string(), num(psnr(img, &sr)?)]);
        traces.push((name.clone(), trace));
        if config.save_images {
            outputs.push((format!("{name}_bicubic"), bic));
            outputs.push((format!("{name}_{method}"), sr));
        }
    }
    Ok(SuperresRun {
        table,
        traces,
        images: outputs,
    })
}

/// The configured dataset, or the synthetic union of subspaces.
pub fn cluster_dataset(config: &ClusterConfig) -> Result<Dataset> {
    match &config.dataset {
        Some(path) => Dataset::load(path),
        None => {
            let s = &config.synthetic;
            if s.classes == 0 || s.per_class == 0 || s.dim == 0 || s.dim > s.m {
                return Err(Error::config("cluster.synthetic needs classes, per_class >= 1 and 1 <= dim <= m"));
            }
            let d = synth::union_of_subspaces(s.m, s.classes, s.dim, s.per_class, s.noise, s.seed);
            Dataset::new("union_of_subspaces", d.samples, d.labels)
        }
    }
}

/// Similarity graph of `method` over centered, unit-norm `samples`.
///
/// Ensembles are trained on the samples themselves; RandExAv draws its
/// dictionaries at random, the boosted trainers fit each round with 1-sparse codes.
pub fn cluster_graph(method: Method, samples: &DMatrix<f64>, config: &ClusterConfig, seed: u64) -> Result<SimilarityGraph> {
    if method == Method::L1Graph {
        return Ok(build_l1_graph(samples, config.lambda)?);
    }
    let set = TrainingSet::uniform(samples.clone())?;
    let k = if config.k == 0 { (samples.ncols() / 4).max(1) } else { config.k };
    let model = match method {
        Method::RandExAv => train_randexav(&set, k, config.l, config.lambda, seed)?,
        Method::BoostEx | Method::BoostKm => {
            let builder = if method == Method::BoostEx {
                BoostBuilder::BoostEx
            } else {
                BoostBuilder::boostkm_default(k)
            };
            let bc = BoostConfig {
                coder: Coder::OneSparse,
                ..BoostConfig::new(k, config.l, config.lambda, builder, seed)
            };
            train_boosted(&set, &bc, None)?.0
        }
        m => return Err(Error::config(format!("{} is not a clustering method", m.name()))),
    };
    Ok(build_ensemble_graph(samples, &model)?)
}

#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub per_seed: Table,
    pub summary: Table,
}

/// Spectral clustering of every method over `config.seeds` seeds; the
/// summary holds the max and mean over seeds.
pub fn run_cluster(dataset: &Dataset, config: &ClusterConfig, seed: u64) -> Result<ClusterRun> {
    let x = center_and_normalize(&dataset.samples);
    let k = dataset.manifest.k;
    let name = &dataset.manifest.name;
    let mut per_seed = Table::new(table::CLUSTER);
    let mut summary = Table::new(table::CLUSTER_SUMMARY);
    for &method in &config.methods {
        let shared = if method == Method::L1Graph {
            Some(cluster_graph(method, &x, config, seed)?)
        } else {
            None
        };
        let mut acc = Vec::new();
        let mut nmi = Vec::new();
        for i in 0..config.seeds {
            let s = split_seed(seed, i as u64);
            let graph = match &shared {
                Some(g) => g.clone(),
                None => cluster_graph(method, &x, config, s)?,
            };
            let scores = spectral_cluster(&graph, k, s)?
                .with_truth(&dataset.labels)?
                .scores
                .expect("truth supplied");
            per_seed.push(vec![name.clone(), method.name().into(), s.to_string(), num(scores.accuracy), num(scores.nmi)]);
            acc.push(scores.accuracy);
            nmi.push(scores.nmi);
        }
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        summary.push(vec![
            name.clone(),
            method.name().into(),
            config.seeds.to_string(),
            num(max(&acc)),
            num(mean(&acc)),
            num(max(&nmi)),
            num(mean(&nmi)),
        ]);
    }
    Ok(ClusterRun { per_seed, summary })
}

/// Mean `||x_i - C_i beta_i||^2` with per-sample optimal weights for each case.
pub fn oracle_case_errors(x: &DMatrix<f64>, approximations: &[DMatrix<f64>]) -> Result<Vec<(ConstraintCase, f64)>> {
    let t = x.ncols();
    ConstraintCase::ALL
        .iter()
        .map(|&case| {
            let mut total = 0.0;
            for i in 0..t {
                let cols = DMatrix::from_columns(&approximations.iter().map(|a| a.column(i)).collect::<Vec<_>>());
                let stack = ApproximationStack::new(cols, x.column(i).into_owned())?;
                let w = solve_weights(&stack, case)?;
                total += residual(&stack, &w)?.norm_squared();
            }
            Ok((case, total / t as f64))
        })
        .collect()
}

fn mean_energy(x: &DMatrix<f64>, approx: &DMatrix<f64>) -> f64 {
    (x - approx).norm_squared() / x.ncols() as f64
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub cases: Table,
    pub methods: Table,
}

/// Oracle-weight residuals per constraint case over a K sweep of random
/// example ensembles, and trained ensembles against their best member.
pub fn run_oracle(corpus: &TrainingSet, test: &DMatrix<f64>, config: &OracleConfig, seed: u64) -> Result<OracleRun> {
    let coder = Coder::Lasso {
        lambda: config.lambda_test,
    };
    let mut cases = Table::new(table::ORACLE_CASES);
    for &k in &config.ks {
        if k > corpus.len() {
            return Err(Error::data(format!("corpus has {} patches, too few for K = {k}", corpus.len())));
        }
        let model = train_randexav(corpus, k, config.l, config.lambda_train, split_seed(seed, k as u64))?;
        let approx = individual_approximations(&model, test, coder, None)?;
        for (case, e) in oracle_case_errors(test, &approx)? {
            cases.push(vec![k.to_string(), config.l.to_string(), case.name().into(), num(e)]);
        }
    }
    let mut methods = Table::new(table::ORACLE_METHODS);
    let k = config.method_k;
    if k > corpus.len() {
        return Err(Error::data(format!("corpus has {} patches, too few for K = {k}", corpus.len())));
    }
    for &method in &config.methods {
        let tc = TrainConfig {
            method,
            k,
            l: config.l,
            lambda_train: config.lambda_train,
            ..TrainConfig::default()
        };
        let ModelFile::Ensemble(model) = train_model(&tc, corpus, None, seed)?.model else {
            return Err(Error::config(format!("{} has no oracle comparison", method.name())));
        };
        let approx = individual_approximations(&model, test, coder, None)?;
        let ensemble = mean_energy(test, &combine(model.betas(), &approx)?);
        let best = approx.iter().map(|a| mean_energy(test, a)).fold(f64::INFINITY, f64::min);
        methods.push(vec![k.to_string(), model.len().to_string(), method.name().into(), num(ensemble), num(best)]);
    }
    Ok(OracleRun { cases, methods })
}
