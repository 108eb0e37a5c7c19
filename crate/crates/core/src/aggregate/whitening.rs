use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Default eigenvalue floor, relative to the largest eigenvalue.
pub const DEFAULT_EPS_REL: f64 = 1e-10;

/// PCA whitening with the leading `drop` components discarded.
///
/// `φ_w = diag(λ^{-1/2}) P^T (φ - mean)`, then the first `drop` entries removed.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningModel {
    mean: Vec<f64>,
    /// Eigenvectors as columns, in descending eigenvalue order.
    projection: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    drop: usize,
    /// Absolute eigenvalue floor applied before the inverse square root.
    eps: f64,
    /// Rows `drop..D` of `diag(λ^{-1/2}) P^T`.
    transform: DMatrix<f64>,
}

impl WhiteningModel {
    pub fn from_parts(mean: Vec<f64>, projection: DMatrix<f64>, eigenvalues: Vec<f64>, drop: usize, eps: f64) -> Result<Self> {
        let dim = mean.len();
        check_dim(dim, projection.nrows())?;
        check_dim(dim, projection.ncols())?;
        check_dim(dim, eigenvalues.len())?;
        if drop >= dim {
            return Err(Error::InvalidArgument(format!("drop = {drop} must be < D = {dim}")));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("eigenvalues must be sorted descending".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("eigenvalue floor must be > 0".into()));
        }
        let kept = dim - drop;
        let mut transform = DMatrix::zeros(kept, dim);
        for r in 0..kept {
            let c = drop + r;
            let s = 1.0 / eigenvalues[c].max(eps).sqrt();
            for k in 0..dim {
                transform[(r, k)] = s * projection[(k, c)];
            }
        }
        Ok(Self {
            mean,
            projection,
            eigenvalues,
            drop,
            eps,
            transform,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.mean.len() - self.drop
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn drop(&self) -> usize {
        self.drop
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Whitens and truncates one vector.
    pub fn whiten(&self, phi: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), phi.len())?;
        let centered = DVector::from_iterator(phi.len(), phi.iter().zip(&self.mean).map(|(a, b)| a - b));
        Ok((&self.transform * centered).data.into())
    }

    /// Whitens every column of `phi` (`D x m`), giving `(D - drop) x m`.
    pub fn whiten_columns(&self, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), phi.nrows())?;
        let mut centered = phi.clone();
        for mut col in centered.column_iter_mut() {
            for (v, m) in col.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        Ok(&self.transform * centered)
    }
}

/// Mean and eigendecomposition of the sample covariance of the columns of `x`,
/// eigenpairs sorted by descending eigenvalue.
pub(crate) fn covariance_eigen(x: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>)> {
    let (dim, count) = x.shape();
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 training vectors, got {count}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training vectors"));
    }
    let mean: DVector<f64> = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose();
    cov /= (count - 1) as f64;
    // symmetrize away gemm roundoff
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vecs = DMatrix::zeros(dim, dim);
    let mut vals = Vec::with_capacity(dim);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // fix the sign so the largest-magnitude entry is positive
        let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |b, (k, x)| if x.abs() > b.1 { (k, x.abs()) } else { b });
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        vecs.set_column(c, &v);
        vals.push(eig.eigenvalues[i].max(0.0));
    }
    Ok((mean.data.into(), vecs, vals))
}

/// Fits whitening on the columns of `phi` (`D x m`).
///
/// Eigenvalues are floored at `eps_rel * λ_1` before inversion.
pub fn fit_whitening(phi: &DMatrix<f64>, drop: usize, eps_rel: f64) -> Result<WhiteningModel> {
    let dim = phi.nrows();
    if drop >= dim {
        return Err(Error::InvalidArgument(format!("drop = {drop} must be < D = {dim}")));
    }
    let (mean, vecs, vals) = covariance_eigen(phi)?;
    let eps = (eps_rel * vals[0]).max(f64::MIN_POSITIVE);
    WhiteningModel::from_parts(mean, vecs, vals, drop, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn scales_known_axes() {
        // points (±√6, 0) and (0, ±√1.5): sample covariance diag(4, 1)
        let (a, b) = (6.0f64.sqrt(), 1.5f64.sqrt());
        let x = DMatrix::from_row_slice(2, 4, &[a, -a, 0.0, 0.0, 0.0, 0.0, b, -b]);
        let w = fit_whitening(&x, 0, DEFAULT_EPS_REL).unwrap();
        assert!((w.eigenvalues()[0] - 4.0).abs() < 1e-12);
        assert!((w.eigenvalues()[1] - 1.0).abs() < 1e-12);
        let y = w.whiten(&[1.0, 0.0]).unwrap();
        assert!((y[0].abs() - 0.5).abs() < 1e-12);
        assert!(y[1].abs() < 1e-12);
        let y = w.whiten(&[0.0, 1.0]).unwrap();
        assert!(y[0].abs() < 1e-12);
        assert!((y[1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_of_axis_scales_matches_covariance() {
        // covariance diag(4, 1): whitening divides by 2 and by 1
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = 20000;
        let x = DMatrix::from_fn(2, m, |k, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if k == 0 { 2.0 * z } else { z }
        });
        let w = fit_whitening(&x, 0, DEFAULT_EPS_REL).unwrap();
        assert!((w.eigenvalues()[0] - 4.0).abs() < 0.15);
        assert!((w.eigenvalues()[1] - 1.0).abs() < 0.05);
        let wx = w.whiten_columns(&x).unwrap();
        let cov = &wx * wx.transpose() / (m - 1) as f64;
        assert!((cov - DMatrix::identity(2, 2)).amax() < 1e-9);
    }

    #[test]
    fn floor_handles_rank_deficiency() {
        let x = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0, 0.0, 0.0, 0.0, 0.0]);
        let w = fit_whitening(&x, 1, DEFAULT_EPS_REL).unwrap();
        assert_eq!(w.output_dim(), 2);
        let y = w.whiten(&[1.0, 1.0, 1.0]).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mean_maps_to_zero_and_errors() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 0.0, 1.0, -1.0]);
        let w = fit_whitening(&x, 1, DEFAULT_EPS_REL).unwrap();
        let m = w.mean().to_vec();
        assert!(w.whiten(&m).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert!(w.whiten(&[1.0]).is_err());
        assert!(fit_whitening(&x, 2, DEFAULT_EPS_REL).is_err());
        assert!(fit_whitening(&DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), 0, DEFAULT_EPS_REL).is_err());
    }
}
