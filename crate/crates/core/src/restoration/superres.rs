//! Example-based single-image superresolution with a global reconstruction constraint.
//!
//! A low-resolution image is upscaled by bicubic interpolation. Gradient and
//! Laplacian responses of the upscaled image, taken over small overlapping
//! patches, form the low-resolution features. Paired dictionaries map each
//! feature patch to the high-frequency detail (`HR - bicubic`) that the
//! bicubic estimate misses. The averaged detail patches are added back and the
//! result is pulled toward consistency with the observed image.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{accumulate_patches, extract_patches, ImagePlane};
use crate::dictionaries::{draw_boostex_dictionary, draw_random_example_dictionary, AtomSource, Dictionary, TrainingSet};
use crate::ensemble::{betas_from_alphas, optimal_alpha, Coder, ModelKind};
use crate::error::{check_dim, Error, Result};
use crate::operator::{BlurDownsample, DegradationOperator};
use crate::rng::{self, split_seed};
use crate::sparse_coding::{best_atoms, inverse_norms, LassoConfig, LassoSolver};

/// Feature maps per pixel: horizontal gradient, vertical gradient, Laplacian.
pub const FEATURE_MAPS: usize = 3;

const KEYS_A: f64 = -0.5;

fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((KEYS_A + 2.0) * t - (KEYS_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((KEYS_A * t - 5.0 * KEYS_A) * t + 8.0 * KEYS_A) * t - 4.0 * KEYS_A
    } else {
        0.0
    }
}

// Tap offsets and weights for each output coordinate along one axis.
fn bicubic_taps(out_len: usize, scale: usize) -> Vec<(isize, [f64; 4])> {
    (0..out_len)
        .map(|p| {
            let u = p as f64 / scale as f64;
            let base = (p / scale) as isize;
            let frac = u - base as f64;
            let w = [keys(1.0 + frac), keys(frac), keys(1.0 - frac), keys(2.0 - frac)];
            (base - 1, w)
        })
        .collect()
}

/// Bicubic (Keys, `a = -0.5`) upscaling by an integer factor.
///
/// High-resolution pixel `p` sits at low-resolution coordinate `p / scale`,
/// matching a decimation that keeps every `scale`-th pixel. Borders replicate.
pub fn bicubic_upscale(low: &ImagePlane, scale: usize) -> Result<ImagePlane> {
    if scale == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    let (w, h) = (low.width() * scale, low.height() * scale);
    let cols = bicubic_taps(w, scale);
    let rows = bicubic_taps(h, scale);
    let mut horizontal = vec![0.0; w * low.height()];
    for r in 0..low.height() {
        for (c, (start, wt)) in cols.iter().enumerate() {
            horizontal[r * w + c] = (0..4)
                .map(|k| wt[k] * low.get_clamped(r as isize, start + k as isize))
                .sum();
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for (start, wt) in &rows {
        for c in 0..w {
            let v: f64 = (0..4)
                .map(|k| {
                    let r = (start + k as isize).clamp(0, low.height() as isize - 1) as usize;
                    wt[k] * horizontal[r * w + c]
                })
                .sum();
            out.push(v);
        }
    }
    ImagePlane::new(w, h, out)
}

/// Central-difference gradients and the 5-point Laplacian, borders replicated.
pub fn gradient_features(image: &ImagePlane) -> Result<[ImagePlane; FEATURE_MAPS]> {
    let (w, h) = (image.width(), image.height());
    let at = |r: usize, c: usize, dr: isize, dc: isize| image.get_clamped(r as isize + dr, c as isize + dc);
    let gx = ImagePlane::from_fn(w, h, |r, c| at(r, c, 0, 1) - at(r, c, 0, -1))?;
    let gy = ImagePlane::from_fn(w, h, |r, c| at(r, c, 1, 0) - at(r, c, -1, 0))?;
    let lap = ImagePlane::from_fn(w, h, |r, c| {
        at(r, c, 0, 1) + at(r, c, 0, -1) + at(r, c, 1, 0) + at(r, c, -1, 0) - 4.0 * at(r, c, 0, 0)
    })?;
    Ok([gx, gy, lap])
}

fn feature_patches(upscaled: &ImagePlane, size: usize, stride: usize) -> Result<DMatrix<f64>> {
    let maps = gradient_features(upscaled)?;
    let blocks = maps
        .iter()
        .map(|m| extract_patches(m, size, stride, false, None).map(|g| g.patches().clone()))
        .collect::<Result<Vec<_>>>()?;
    let (m, p) = (blocks[0].nrows(), blocks[0].ncols());
    let mut out = DMatrix::zeros(m * FEATURE_MAPS, p);
    for (b, block) in blocks.iter().enumerate() {
        out.rows_mut(b * m, m).copy_from(block);
    }
    Ok(out)
}

fn degrade(high: &ImagePlane, scale: usize) -> Result<(ImagePlane, DegradationOperator)> {
    let op = DegradationOperator::BlurDownsample(BlurDownsample::binomial(high.width(), high.height(), scale)?);
    let b = match &op {
        DegradationOperator::BlurDownsample(b) => (b.low_width(), b.low_height()),
        _ => unreachable!(),
    };
    let z = op.apply(&high.to_vector())?;
    Ok((ImagePlane::from_vector(b.0, b.1, &z)?, op))
}

/// Low-resolution observation of a high-resolution image: binomial blur, then decimation.
pub fn blur_decimate(high: &ImagePlane, scale: usize) -> Result<ImagePlane> {
    degrade(high, scale).map(|(z, _)| z)
}

/// Feature / detail pairs harvested from high-resolution training images.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrainingSet {
    /// `FEATURE_MAPS * s^2` rows, one column per patch.
    pub features: DMatrix<f64>,
    /// `s^2` rows of `HR - bicubic` detail.
    pub targets: DMatrix<f64>,
    pub patch_size: usize,
    pub scale: usize,
}

impl PairedTrainingSet {
    /// Patches every `stride` pixels; patches whose feature energy is below
    /// `feature_floor` are dropped. At most `max_samples` pairs are kept, chosen
    /// uniformly with `seed`.
    pub fn from_images(
        images: &[ImagePlane],
        config: &SisrConfig,
        stride: usize,
        feature_floor: f64,
        max_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let s = config.patch_size;
        let mut feats: Vec<f64> = Vec::new();
        let mut targs: Vec<f64> = Vec::new();
        for img in images {
            let (z, _) = degrade(img, config.scale)?;
            let up = bicubic_upscale(&z, config.scale)?;
            check_dim("training image width (multiple of scale)", img.width(), up.width())?;
            check_dim("training image height (multiple of scale)", img.height(), up.height())?;
            let f = feature_patches(&up, s, stride)?;
            let detail = ImagePlane::new(
                img.width(),
                img.height(),
                img.pixels().iter().zip(up.pixels()).map(|(a, b)| a - b).collect(),
            )?;
            let t = extract_patches(&detail, s, stride, false, None)?;
            for i in 0..f.ncols() {
                if f.column(i).norm_squared() < feature_floor {
                    continue;
                }
                feats.extend(f.column(i).iter());
                targs.extend(t.patches().column(i).iter());
            }
        }
        let (fm, tm) = (FEATURE_MAPS * s * s, s * s);
        let count = feats.len() / fm;
        if count == 0 {
            return Err(Error::NotEnoughSamples { needed: 1, available: 0 });
        }
        let features = DMatrix::from_vec(fm, count, feats);
        let targets = DMatrix::from_vec(tm, count, targs);
        let (features, targets) = if count > max_samples {
            let mut r = rng::seeded(seed);
            let mut keep = rand::seq::index::sample(&mut r, count, max_samples).into_vec();
            keep.sort_unstable();
            (features.select_columns(&keep), targets.select_columns(&keep))
        } else {
            (features, targets)
        };
        Ok(Self {
            features,
            targets,
            patch_size: s,
            scale: config.scale,
        })
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.features.ncols() == 0
    }
}

/// Unit-norm feature atoms with their detail patches scaled alike.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDictionary {
    pub low: Dictionary,
    pub high: DMatrix<f64>,
}

impl PairedDictionary {
    pub fn new(low: Dictionary, high: DMatrix<f64>) -> Result<Self> {
        check_dim("paired atom count", low.len(), high.ncols())?;
        Ok(Self { low, high })
    }

    /// Example pairs `chosen` from the training set.
    pub fn from_examples(set: &PairedTrainingSet, chosen: &[usize]) -> Result<Self> {
        let f = set.features.select_columns(chosen);
        let mut high = set.targets.select_columns(chosen);
        for (j, col) in f.column_iter().enumerate() {
            let n = col.norm();
            if n == 0.0 {
                return Err(Error::ZeroColumn(j));
            }
            high.column_mut(j).unscale_mut(n);
        }
        let low = Dictionary::new(f, AtomSource::ExampleSubset)?.with_origin(chosen.to_vec())?;
        Self::new(low, high)
    }

    fn codes(&self, features: &DMatrix<f64>, coder: Coder) -> Result<DMatrix<f64>> {
        let atoms = self.low.atoms();
        match coder {
            Coder::OneSparse => {
                let inv = inverse_norms(atoms);
                let mut a = DMatrix::zeros(atoms.ncols(), features.ncols());
                for (i, (j, v)) in best_atoms(atoms, &inv, features).into_iter().enumerate() {
                    a[(j, i)] = v;
                }
                Ok(a)
            }
            Coder::Lasso { lambda } => {
                LassoSolver::new(atoms.clone(), lambda, LassoConfig::default())?.solve_columns(features)
            }
        }
    }

    /// Detail patches predicted for each feature column.
    pub fn predict(&self, features: &DMatrix<f64>, coder: Coder) -> Result<DMatrix<f64>> {
        Ok(&self.high * self.codes(features, coder)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedModel {
    kind: ModelKind,
    dictionaries: Vec<PairedDictionary>,
    betas: DVector<f64>,
    patch_size: usize,
    scale: usize,
}

impl PairedModel {
    pub fn new(
        kind: ModelKind,
        dictionaries: Vec<PairedDictionary>,
        betas: DVector<f64>,
        patch_size: usize,
        scale: usize,
    ) -> Result<Self> {
        if dictionaries.is_empty() {
            return Err(Error::invalid("paired model needs at least one dictionary"));
        }
        check_dim("paired weights", dictionaries.len(), betas.len())?;
        for d in &dictionaries {
            check_dim("feature dimension", FEATURE_MAPS * patch_size * patch_size, d.low.dim())?;
            check_dim("detail dimension", patch_size * patch_size, d.high.nrows())?;
        }
        if scale < 2 {
            return Err(Error::invalid("superresolution scale must be at least 2"));
        }
        Ok(Self {
            kind,
            dictionaries,
            betas,
            patch_size,
            scale,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dictionaries(&self) -> &[PairedDictionary] {
        &self.dictionaries
    }

    pub fn betas(&self) -> &DVector<f64> {
        &self.betas
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// `sum_l beta_l H_l a_l` for every feature column.
    pub fn predict(&self, features: &DMatrix<f64>, coder: Coder) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.patch_size * self.patch_size, features.ncols());
        for (d, b) in self.dictionaries.iter().zip(self.betas.iter()) {
            out += d.predict(features, coder)? * *b;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairedTrainer {
    RandExAv,
    BoostEx,
}

/// Trains `l` paired example dictionaries of `k` atoms.
///
/// BoostEx reweights training pairs by the error of each round's detail
/// prediction and combines rounds with the closed-form alpha, starting
/// from `alpha_1 = 1`.
pub fn train_paired(
    set: &PairedTrainingSet,
    k: usize,
    l: usize,
    trainer: PairedTrainer,
    coder: Coder,
    seed: u64,
) -> Result<PairedModel> {
    if l == 0 {
        return Err(Error::invalid("paired ensemble needs at least one model"));
    }
    let features = TrainingSet::uniform(set.features.clone())?;
    let origin = |d: &Dictionary| d.origin().map(<[usize]>::to_vec).unwrap_or_default();
    match trainer {
        PairedTrainer::RandExAv => {
            let dicts = (0..l)
                .map(|i| {
                    let d = draw_random_example_dictionary(&features, k, split_seed(seed, i as u64))?;
                    PairedDictionary::from_examples(set, &origin(&d))
                })
                .collect::<Result<Vec<_>>>()?;
            PairedModel::new(
                ModelKind::RandExAv,
                dicts,
                DVector::from_element(l, 1.0 / l as f64),
                set.patch_size,
                set.scale,
            )
        }
        PairedTrainer::BoostEx => {
            let y = &set.targets;
            let t = set.len();
            let mut masses = DVector::from_element(t, 1.0 / t as f64);
            let mut cumulative = DMatrix::zeros(y.nrows(), t);
            let mut dicts = Vec::with_capacity(l);
            let mut alphas = Vec::with_capacity(l);
            for round in 0..l {
                let weighted = features.reweighted(masses.clone())?;
                let d = draw_boostex_dictionary(&weighted, k, split_seed(seed, round as u64))?;
                let pd = PairedDictionary::from_examples(set, &origin(&d))?;
                let approx = pd.predict(&set.features, coder)?;
                let alpha = if round == 0 {
                    1.0
                } else {
                    optimal_alpha(y, &cumulative, &approx)?
                };
                cumulative = &cumulative * (1.0 - alpha) + &approx * alpha;
                let err = DVector::from_iterator(t, (y - &approx).column_iter().map(|c| c.norm_squared()));
                let total = err.sum();
                masses = if total > 0.0 {
                    err / total
                } else {
                    DVector::from_element(t, 1.0 / t as f64)
                };
                dicts.push(pd);
                alphas.push(alpha);
                if !(total > 0.0) {
                    break;
                }
            }
            let betas = betas_from_alphas(&DVector::from_vec(alphas));
            PairedModel::new(ModelKind::BoostEx, dicts, betas, set.patch_size, set.scale)
        }
    }
}

/// Weight `c` and gradient iterations of the consistency refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackProjection {
    pub c: f64,
    pub iterations: usize,
}

impl Default for BackProjection {
    fn default() -> Self {
        Self { c: 1.0, iterations: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackProjectionTrace {
    /// `||Z - Phi Y||^2 + c ||Y - Y0||^2` at `Y0` and after each iteration.
    pub objective: Vec<f64>,
    /// Gradient norm at `Y0` and after each iteration.
    pub gradient_norm: Vec<f64>,
}

/// Minimizes `||Z - Phi Y||^2 + c ||Y - Y0||^2` by gradient descent from `Y0`.
///
/// The step is the inverse of the Lipschitz bound `2 (||Phi||^2 + c)`, so the
/// objective never increases.
pub fn back_project(
    y0: &DVector<f64>,
    z: &DVector<f64>,
    operator: &DegradationOperator,
    params: BackProjection,
) -> Result<(DVector<f64>, BackProjectionTrace)> {
    check_dim("Y0 length", operator.in_dim(), y0.len())?;
    check_dim("Z length", operator.out_dim(), z.len())?;
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::invalid("back-projection weight c must be positive"));
    }
    let step = 1.0 / (2.0 * (operator.norm_sq_bound() + params.c));
    let eval = |y: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let r = operator.apply(y)? - z;
        let d = y - y0;
        let f = r.norm_squared() + params.c * d.norm_squared();
        let g = operator.adjoint(&r)? * 2.0 + d * (2.0 * params.c);
        Ok((f, g))
    };
    let mut y = y0.clone();
    let (mut f, mut g) = eval(&y)?;
    let mut trace = BackProjectionTrace {
        objective: vec![f],
        gradient_norm: vec![g.norm()],
    };
    for _ in 0..params.iterations {
        let next = &y - &g * step;
        let (fn_, gn) = eval(&next)?;
        // rounding floor reached
        if fn_ > f {
            break;
        }
        (y, f, g) = (next, fn_, gn);
        trace.objective.push(f);
        trace.gradient_norm.push(g.norm());
    }
    Ok((y, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisrConfig {
    pub scale: usize,
    pub patch_size: usize,
    pub coder: Coder,
    pub back_projection: Option<BackProjection>,
}

impl Default for SisrConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            patch_size: 5,
            coder: Coder::OneSparse,
            back_projection: Some(BackProjection::default()),
        }
    }
}

/// Upscales `low` by the model's factor.
///
/// Returns the clamped estimate and, when back-projection is enabled, its trace.
pub fn superresolve(
    low: &ImagePlane,
    model: &PairedModel,
    config: &SisrConfig,
) -> Result<(ImagePlane, Option<BackProjectionTrace>)> {
    if config.scale != model.scale || config.patch_size != model.patch_size {
        return Err(Error::invalid(alloc::format!(
            "model was trained for scale {} with {}x{} patches",
            model.scale,
            model.patch_size,
            model.patch_size
        )));
    }
    let up = bicubic_upscale(low, config.scale)?;
    let s = config.patch_size;
    let features = feature_patches(&up, s, 1)?;
    let detail = model.predict(&features, config.coder)?;
    let grid = extract_patches(&up, s, 1, false, None)?;
    let detail_image = accumulate_patches(&grid, &detail)?;
    let y0 = up.to_vector() + detail_image.to_vector();
    let (w, h) = (up.width(), up.height());
    match config.back_projection {
        Some(bp) => {
            let op = DegradationOperator::BlurDownsample(BlurDownsample::binomial(w, h, config.scale)?);
            let (y, trace) = back_project(&y0, &low.to_vector(), &op, bp)?;
            Ok((ImagePlane::from_vector(w, h, &y)?.clamped(), Some(trace)))
        }
        None => Ok((ImagePlane::from_vector(w, h, &y0)?.clamped(), None)),
    }
}
