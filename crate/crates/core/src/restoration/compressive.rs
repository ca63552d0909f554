use nalgebra::DMatrix;

use super::{assemble_patches, extract_patches, psnr, ImagePlane, PatchGrid};
use crate::dictionaries::Dictionary;
use crate::ensemble::{apply_ensemble_batch, Coder, EnsembleModel, MultilevelModel};
use crate::error::{check_dim, Error, Result};
use crate::operator::DegradationOperator;
use crate::sparse_coding::code_batch;

/// The model that turns measurements back into patches.
#[derive(Debug, Clone, Copy)]
pub enum Recoverer<'a> {
    /// Weighted sum of the base models' lasso reconstructions.
    Ensemble(&'a EnsembleModel),
    /// Lasso decode against one dictionary.
    Dictionary(&'a Dictionary),
    /// Ex-MLD cascade on the measurements.
    Multilevel(&'a MultilevelModel),
}

impl Recoverer<'_> {
    fn dim(&self) -> usize {
        match self {
            Recoverer::Ensemble(m) => m.dim(),
            Recoverer::Dictionary(d) => d.dim(),
            Recoverer::Multilevel(m) => m.dim(),
        }
    }

    /// Clean-space patch estimates from measurements `Phi Y`.
    pub fn recover(
        &self,
        measurements: &DMatrix<f64>,
        lambda: f64,
        operator: &DegradationOperator,
    ) -> Result<DMatrix<f64>> {
        match self {
            Recoverer::Ensemble(m) => apply_ensemble_batch(m, measurements, Coder::Lasso { lambda }, Some(operator)),
            Recoverer::Dictionary(d) => {
                let codes = code_batch(measurements, d, lambda, Some(operator))?;
                Ok(d.atoms() * codes)
            }
            Recoverer::Multilevel(m) => m.prepare(Some(operator))?.apply_batch(measurements),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub image: ImagePlane,
    pub psnr_db: f64,
    pub measurements: usize,
    pub seed: u64,
}

/// `Phi p` for every patch column.
pub fn measure_patches(grid: &PatchGrid, operator: &DegradationOperator) -> Result<DMatrix<f64>> {
    operator.apply_columns(grid.patches())
}

/// Compressive recovery of an image from `n` random measurements per patch.
///
/// The image is cut into non-overlapping square patches matching the model
/// dimension. Each mean-removed patch is measured with the same Gaussian
/// `n x M` matrix drawn from `seed`; the patch means travel as side
/// information. `n == M` measures with the identity.
pub fn compressive_recover(
    image: &ImagePlane,
    recoverer: Recoverer<'_>,
    n: usize,
    lambda: f64,
    seed: u64,
) -> Result<Recovery> {
    let m = recoverer.dim();
    let size = (1..=m).find(|s| s * s >= m).unwrap_or(m);
    if size * size != m {
        return Err(Error::invalid("model dimension is not a square patch size"));
    }
    if n == 0 || n > m {
        return Err(Error::invalid("measurement count must be in 1..=M"));
    }
    let grid = extract_patches(image, size, size, true, None)?;
    let operator = DegradationOperator::measurement(m, n, seed)?;
    let z = measure_patches(&grid, &operator)?;
    let estimates = recoverer.recover(&z, lambda, &operator)?;
    check_dim("recovered patch columns", grid.len(), estimates.ncols())?;
    let out = assemble_patches(&grid, &estimates)?;
    let psnr_db = psnr(image, &out)?;
    Ok(Recovery {
        image: out,
        psnr_db,
        measurements: n,
        seed,
    })
}
