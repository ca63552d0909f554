//! Image restoration: patches, PSNR, compressive recovery and superresolution.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::math;

mod compressive;
mod superres;

pub use compressive::{compressive_recover, measure_patches, Recoverer, Recovery};
pub use superres::{
    back_project, bicubic_upscale, blur_decimate, gradient_features, superresolve, train_paired, BackProjection, BackProjectionTrace,
    PairedDictionary, PairedModel, PairedTrainer, PairedTrainingSet, SisrConfig, FEATURE_MAPS,
};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 200.0;

/// Minimum patch variance kept when extracting training patches.
pub const TRAINING_VARIANCE_FLOOR: f64 = 2e-3;

/// Grayscale image, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        check_dim("pixel count", width * height, pixels.len())?;
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("image has non-finite pixels"));
        }
        Ok(Self { width, height, pixels })
    }

    /// `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Pixel with coordinates clamped into the image.
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.pixels[r * self.width + c]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.pixels)
    }

    pub fn from_vector(width: usize, height: usize, v: &DVector<f64>) -> Result<Self> {
        Self::new(width, height, v.as_slice().to_vec())
    }

    pub fn clamped(mut self) -> Self {
        for p in &mut self.pixels {
            *p = p.clamp(0.0, 1.0);
        }
        self
    }

    pub fn same_shape(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Top-left corners covering `len` with windows of `size` at `stride`.
///
/// The last window is added when the stride does not land on `len - size`.
pub fn window_starts(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=len - size).step_by(stride).collect();
    if starts.last() != Some(&(len - size)) {
        starts.push(len - size);
    }
    starts
}

/// Vectorized patches (row-major inside each patch) and what is needed to put them back.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patches: DMatrix<f64>,
    size: usize,
    stride: usize,
    width: usize,
    height: usize,
    /// `(row, col)` of each patch's top-left pixel.
    positions: Vec<(usize, usize)>,
    means: Option<Vec<f64>>,
}

impl PatchGrid {
    pub fn patches(&self) -> &DMatrix<f64> {
        &self.patches
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn means(&self) -> Option<&[f64]> {
        self.means.as_deref()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Cuts `image` into `size x size` patches, row-major by position.
///
/// With `remove_mean` each patch has its mean subtracted and stored. A
/// `variance_floor` (training mode) drops patches whose variance falls below it.
pub fn extract_patches(
    image: &ImagePlane,
    size: usize,
    stride: usize,
    remove_mean: bool,
    variance_floor: Option<f64>,
) -> Result<PatchGrid> {
    if size == 0 || size > image.width.min(image.height) {
        return Err(Error::invalid("patch size must be in 1..=min(width, height)"));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let m = size * size;
    let mut data = Vec::new();
    let mut positions = Vec::new();
    let mut means = Vec::new();
    let mut patch = vec![0.0; m];
    for r in window_starts(image.height, size, stride) {
        for c in window_starts(image.width, size, stride) {
            for (k, p) in patch.iter_mut().enumerate() {
                *p = image.get(r + k / size, c + k % size);
            }
            let mean = patch.iter().sum::<f64>() / m as f64;
            if let Some(floor) = variance_floor {
                let var = patch.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / m as f64;
                if var < floor {
                    continue;
                }
            }
            if remove_mean {
                data.extend(patch.iter().map(|p| p - mean));
                means.push(mean);
            } else {
                data.extend_from_slice(&patch);
            }
            positions.push((r, c));
        }
    }
    Ok(PatchGrid {
        patches: DMatrix::from_vec(m, positions.len(), data),
        size,
        stride,
        width: image.width,
        height: image.height,
        positions,
        means: remove_mean.then_some(means),
    })
}

/// Puts patch estimates back, averaging overlaps and re-adding stored means.
///
/// Pixels no patch covers are 0. The result is clamped to `[0, 1]`.
pub fn assemble_patches(grid: &PatchGrid, estimates: &DMatrix<f64>) -> Result<ImagePlane> {
    Ok(accumulate_patches(grid, estimates)?.clamped())
}

pub(crate) fn accumulate_patches(grid: &PatchGrid, estimates: &DMatrix<f64>) -> Result<ImagePlane> {
    check_dim("estimate rows", grid.size * grid.size, estimates.nrows())?;
    check_dim("estimate columns", grid.len(), estimates.ncols())?;
    let w = grid.width;
    let mut sum = vec![0.0; w * grid.height];
    let mut count = vec![0u32; w * grid.height];
    for (p, &(r, c)) in grid.positions.iter().enumerate() {
        let mean = grid.means.as_ref().map_or(0.0, |m| m[p]);
        for (k, v) in estimates.column(p).iter().enumerate() {
            let idx = (r + k / grid.size) * w + c + k % grid.size;
            sum[idx] += v + mean;
            count[idx] += 1;
        }
    }
    let pixels = sum
        .into_iter()
        .zip(count)
        .map(|(s, n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    ImagePlane::new(w, grid.height, pixels)
}

/// Mean squared pixel difference.
pub fn mse(reference: &ImagePlane, estimate: &ImagePlane) -> Result<f64> {
    if !reference.same_shape(estimate) {
        return Err(Error::DimensionMismatch {
            what: "image shape",
            expected: reference.pixels.len(),
            found: estimate.pixels.len(),
        });
    }
    let n = reference.pixels.len() as f64;
    Ok(reference
        .pixels
        .iter()
        .zip(&estimate.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// `10 log10(1 / MSE)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &ImagePlane, estimate: &ImagePlane) -> Result<f64> {
    let e = mse(reference, estimate)?;
    if e <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * math::log10(e)).min(PSNR_CAP_DB))
}

#[cfg(test)]
mod tests;
