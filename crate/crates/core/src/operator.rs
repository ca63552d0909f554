//! Linear degradation operators `z = Phi y`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Identity,
    RandomProjection,
    BlurDownsample,
}

/// Everything needed to rebuild an operator bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorDescriptor {
    pub kind: OperatorKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Projection seed; zero for deterministic kinds.
    pub seed: u64,
    /// Image geometry for blur + downsample; zero otherwise.
    pub width: usize,
    pub height: usize,
    pub scale: usize,
}

/// Separable blur followed by decimation on a row-major `width x height` image.
///
/// Borders replicate the edge pixel. Output pixel `(i, j)` samples the
/// blurred image at `(scale * i, scale * j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurDownsample {
    width: usize,
    height: usize,
    scale: usize,
    kernel: Vec<f64>,
}

impl BlurDownsample {
    /// 3-tap binomial kernel `[1, 2, 1] / 4` in each direction.
    pub fn binomial(width: usize, height: usize, scale: usize) -> Result<Self> {
        Self::new(width, height, scale, vec![0.25, 0.5, 0.25])
    }

    pub fn new(width: usize, height: usize, scale: usize, kernel: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || scale == 0 {
            return Err(Error::invalid("blur/downsample needs positive size and scale"));
        }
        if kernel.len() % 2 == 0 {
            return Err(Error::invalid("blur kernel length must be odd"));
        }
        let sum: f64 = kernel.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("blur kernel must sum to 1"));
        }
        Ok(Self {
            width,
            height,
            scale,
            kernel,
        })
    }

    pub fn low_width(&self) -> usize {
        self.width.div_ceil(self.scale)
    }

    pub fn low_height(&self) -> usize {
        self.height.div_ceil(self.scale)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn taps(&self, center: usize, len: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = (self.kernel.len() / 2) as isize;
        self.kernel.iter().enumerate().map(move |(a, &w)| {
            let p = (center as isize + a as isize - r).clamp(0, len as isize - 1);
            (p as usize, w)
        })
    }

    fn forward(&self, y: &[f64]) -> Vec<f64> {
        let (lw, lh) = (self.low_width(), self.low_height());
        let mut out = vec![0.0; lw * lh];
        for i in 0..lh {
            for j in 0..lw {
                let mut acc = 0.0;
                for (py, wy) in self.taps(self.scale * i, self.height) {
                    for (px, wx) in self.taps(self.scale * j, self.width) {
                        acc += wy * wx * y[py * self.width + px];
                    }
                }
                out[i * lw + j] = acc;
            }
        }
        out
    }

    fn adjoint(&self, z: &[f64]) -> Vec<f64> {
        let lw = self.low_width();
        let mut out = vec![0.0; self.width * self.height];
        for i in 0..self.low_height() {
            for j in 0..lw {
                let v = z[i * lw + j];
                for (py, wy) in self.taps(self.scale * i, self.height) {
                    for (px, wx) in self.taps(self.scale * j, self.width) {
                        out[py * self.width + px] += wy * wx * v;
                    }
                }
            }
        }
        out
    }
}

/// The corruption map applied to clean data before coding.
#[derive(Debug, Clone, PartialEq)]
pub enum DegradationOperator {
    Identity { dim: usize },
    RandomProjection { matrix: DMatrix<f64>, seed: u64 },
    BlurDownsample(BlurDownsample),
}

impl DegradationOperator {
    /// Gaussian measurement matrix with i.i.d. `N(0, 1/N)` entries, `N = out_dim < in_dim`.
    pub fn random_projection(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if out_dim == 0 || out_dim >= in_dim {
            return Err(Error::invalid(alloc::format!(
                "random projection needs 0 < N < M (got N = {out_dim}, M = {in_dim})"
            )));
        }
        let mut rng = rng::seeded(seed);
        let scale = 1.0 / math::sqrt(out_dim as f64);
        let matrix = DMatrix::from_fn(out_dim, in_dim, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        });
        Ok(DegradationOperator::RandomProjection { matrix, seed })
    }

    /// Compressive measurement operator: Gaussian for `N < M`, identity for `N == M`.
    pub fn measurement(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if out_dim == in_dim {
            Ok(DegradationOperator::Identity { dim: in_dim })
        } else {
            Self::random_projection(in_dim, out_dim, seed)
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            DegradationOperator::Identity { .. } => OperatorKind::Identity,
            DegradationOperator::RandomProjection { .. } => OperatorKind::RandomProjection,
            DegradationOperator::BlurDownsample(_) => OperatorKind::BlurDownsample,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            DegradationOperator::Identity { dim } => *dim,
            DegradationOperator::RandomProjection { matrix, .. } => matrix.ncols(),
            DegradationOperator::BlurDownsample(b) => b.width * b.height,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            DegradationOperator::Identity { dim } => *dim,
            DegradationOperator::RandomProjection { matrix, .. } => matrix.nrows(),
            DegradationOperator::BlurDownsample(b) => b.low_width() * b.low_height(),
        }
    }

    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("operator input", self.in_dim(), y.len())?;
        Ok(match self {
            DegradationOperator::Identity { .. } => y.clone(),
            DegradationOperator::RandomProjection { matrix, .. } => matrix * y,
            DegradationOperator::BlurDownsample(b) => DVector::from_vec(b.forward(y.as_slice())),
        })
    }

    /// `Phi^T z`.
    pub fn adjoint(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("operator adjoint input", self.out_dim(), z.len())?;
        Ok(match self {
            DegradationOperator::Identity { .. } => z.clone(),
            DegradationOperator::RandomProjection { matrix, .. } => matrix.tr_mul(z),
            DegradationOperator::BlurDownsample(b) => DVector::from_vec(b.adjoint(z.as_slice())),
        })
    }

    /// Applies the operator to every column (e.g. `Phi D` or `Phi X`).
    pub fn apply_columns(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("operator input", self.in_dim(), m.nrows())?;
        Ok(match self {
            DegradationOperator::Identity { .. } => m.clone(),
            DegradationOperator::RandomProjection { matrix, .. } => matrix * m,
            DegradationOperator::BlurDownsample(b) => {
                let mut out = DMatrix::zeros(self.out_dim(), m.ncols());
                for (j, col) in m.column_iter().enumerate() {
                    let v: Vec<f64> = col.iter().copied().collect();
                    out.column_mut(j).copy_from_slice(&b.forward(&v));
                }
                out
            }
        })
    }

    /// Upper bound on `||Phi||_2^2` from `||Phi||_1 ||Phi||_inf`.
    pub fn norm_sq_bound(&self) -> f64 {
        match self {
            DegradationOperator::Identity { .. } => 1.0,
            DegradationOperator::RandomProjection { matrix, .. } => {
                crate::linalg::spectral_norm_sq(matrix)
            }
            DegradationOperator::BlurDownsample(b) => {
                let ones = vec![1.0; b.low_width() * b.low_height()];
                // rows sum to one, so ||Phi||_inf = 1
                b.adjoint(&ones).into_iter().fold(0.0_f64, f64::max)
            }
        }
    }

    pub fn descriptor(&self) -> OperatorDescriptor {
        let (seed, width, height, scale) = match self {
            DegradationOperator::Identity { .. } => (0, 0, 0, 0),
            DegradationOperator::RandomProjection { seed, .. } => (*seed, 0, 0, 0),
            DegradationOperator::BlurDownsample(b) => (0, b.width, b.height, b.scale),
        };
        OperatorDescriptor {
            kind: self.kind(),
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            seed,
            width,
            height,
            scale,
        }
    }

    /// Rebuilds an operator from its descriptor. Blur operators use the binomial kernel.
    pub fn from_descriptor(d: &OperatorDescriptor) -> Result<Self> {
        let op = match d.kind {
            OperatorKind::Identity => DegradationOperator::Identity { dim: d.in_dim },
            OperatorKind::RandomProjection => Self::random_projection(d.in_dim, d.out_dim, d.seed)?,
            OperatorKind::BlurDownsample => {
                DegradationOperator::BlurDownsample(BlurDownsample::binomial(d.width, d.height, d.scale)?)
            }
        };
        check_dim("operator descriptor out_dim", d.out_dim, op.out_dim())?;
        check_dim("operator descriptor in_dim", d.in_dim, op.in_dim())?;
        Ok(op)
    }
}
