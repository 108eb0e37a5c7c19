use nalgebra::DMatrix;

use super::normalize::{l2_normalize, ImageSignature};
use super::whitening::{covariance_eigen, WhiteningModel};
use crate::error::{check_dim, Error, Result};

/// Whitening learned on aggregated signatures, followed by truncation to the
/// first `keep` components and re-normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationNormModel {
    whitening: WhiteningModel,
    keep: usize,
    /// First `keep` rows of the whitening transform.
    rows: DMatrix<f64>,
}

impl RotationNormModel {
    pub fn new(whitening: WhiteningModel, keep: usize) -> Result<Self> {
        if whitening.drop() != 0 {
            return Err(Error::InvalidArgument("rotation normalization drops no components".into()));
        }
        let dim = whitening.input_dim();
        if keep == 0 || keep > dim {
            return Err(Error::InvalidArgument(format!("keep = {keep} must be in 1..={dim}")));
        }
        let mut rows = DMatrix::zeros(keep, dim);
        for r in 0..keep {
            let s = 1.0 / whitening.eigenvalues()[r].max(whitening.eps()).sqrt();
            for k in 0..dim {
                rows[(r, k)] = s * whitening.projection()[(k, r)];
            }
        }
        Ok(Self { whitening, keep, rows })
    }

    pub fn whitening(&self) -> &WhiteningModel {
        &self.whitening
    }

    pub fn keep(&self) -> usize {
        self.keep
    }

    pub fn input_dim(&self) -> usize {
        self.whitening.input_dim()
    }

    /// Rotates, truncates and unit-normalizes one signature.
    pub fn apply(&self, sig: &ImageSignature) -> Result<ImageSignature> {
        check_dim(self.input_dim(), sig.values.len())?;
        if sig.degenerate {
            return Ok(ImageSignature {
                image_id: sig.image_id.clone(),
                values: vec![0.0; self.keep],
                degenerate: true,
            });
        }
        let centered = nalgebra::DVector::from_iterator(
            sig.values.len(),
            sig.values.iter().zip(self.whitening.mean()).map(|(a, b)| a - b),
        );
        let (values, degenerate) = l2_normalize((&self.rows * centered).data.into());
        Ok(ImageSignature {
            image_id: sig.image_id.clone(),
            values,
            degenerate,
        })
    }
}

/// Fits rotation normalization on training signatures given as columns (`D' x N`).
pub fn fit_rotation_norm(signatures: &DMatrix<f64>, keep: usize, eps_rel: f64) -> Result<RotationNormModel> {
    let dim = signatures.nrows();
    if keep == 0 || keep > dim {
        return Err(Error::InvalidArgument(format!("keep = {keep} must be in 1..={dim}")));
    }
    let (mean, vecs, vals) = covariance_eigen(signatures)?;
    let eps = (eps_rel * vals[0]).max(f64::MIN_POSITIVE);
    let whitening = WhiteningModel::from_parts(mean, vecs, vals, 0, eps)?;
    RotationNormModel::new(whitening, keep)
}

/// Applies [`RotationNormModel::apply`].
pub fn apply_rn(sig: &ImageSignature, model: &RotationNormModel) -> Result<ImageSignature> {
    model.apply(sig)
}
