use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::hamming::BinaryCode;
use crate::aggregate::ImageSignature;
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_ITQ_ITERS: usize = 50;

/// Eigenvalues below this fraction of the largest count as zero when
/// checking that `b` directions are available.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ItqModel {
    mean: Vec<f64>,
    /// `D' x b`, top principal directions.
    pca: DMatrix<f64>,
    /// `b x b`, orthogonal.
    rotation: DMatrix<f64>,
    /// `(pca R)^T`, cached for encoding.
    encoder: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ItqFit {
    pub model: ItqModel,
    /// `‖B − V R‖_F²` at the initial rotation and after every iteration.
    pub quantization_error: Vec<f64>,
}

impl ItqModel {
    pub fn from_parts(mean: Vec<f64>, pca: DMatrix<f64>, rotation: DMatrix<f64>) -> Result<Self> {
        check_dim(pca.nrows(), mean.len())?;
        let b = pca.ncols();
        if b == 0 || rotation.shape() != (b, b) {
            return Err(Error::InvalidArgument(format!(
                "rotation is {}x{}, expected {b}x{b}",
                rotation.nrows(),
                rotation.ncols()
            )));
        }
        if mean.iter().chain(pca.iter()).chain(rotation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ITQ model"));
        }
        let encoder = (&pca * &rotation).transpose();
        Ok(Self { mean, pca, rotation, encoder })
    }

    pub fn bits(&self) -> usize {
        self.rotation.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn pca(&self) -> &DMatrix<f64> {
        &self.pca
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    /// `‖R^T R − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let b = self.bits();
        (self.rotation.transpose() * &self.rotation - DMatrix::identity(b, b)).norm()
    }

    pub fn project(&self, psi: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), psi.len())?;
        let c = DVector::from_iterator(psi.len(), psi.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok((&self.encoder * c).data.into())
    }
}

fn sign_matrix(v: &DMatrix<f64>) -> DMatrix<f64> {
    v.map(|x| if x >= 0.0 { 1.0 } else { -1.0 })
}

/// Orthogonal `R` minimizing `‖B − V R‖_F`.
fn procrustes(v: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = (v.transpose() * b).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    Ok(u * vt)
}

fn random_rotation(b: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(b, b, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // fix column signs so the factorization is unique
    for j in 0..b {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Learns PCA + rotation from training signatures given as columns (`D' x N`).
pub fn fit_itq(signatures: &DMatrix<f64>, bits: usize, iters: usize, seed: u64) -> Result<ItqFit> {
    let (dim, count) = signatures.shape();
    if bits == 0 || bits > dim {
        return Err(Error::InvalidArgument(format!("bits = {bits} must be in 1..={dim}")));
    }
    if count <= bits {
        return Err(Error::InvalidArgument(format!("{count} training signatures, need more than {bits}")));
    }
    let (mean, vecs, vals) = crate::aggregate::covariance_eigen(signatures)?;
    let rank = vals.iter().filter(|v| **v > RANK_TOL * vals[0]).count();
    if bits > rank {
        return Err(Error::RankDeficient { requested: bits, rank });
    }
    let pca = vecs.columns(0, bits).into_owned();
    let mut centered = signatures.clone();
    for mut col in centered.column_iter_mut() {
        for (x, m) in col.iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    let v = centered.transpose() * &pca;

    let mut rotation = random_rotation(bits, seed);
    let err = |r: &DMatrix<f64>| {
        let vr = &v * r;
        (sign_matrix(&vr) - vr).norm_squared()
    };
    let mut trace = vec![err(&rotation)];
    for _ in 0..iters {
        let b = sign_matrix(&(&v * &rotation));
        rotation = procrustes(&v, &b)?;
        trace.push(err(&rotation));
    }
    Ok(ItqFit { model: ItqModel::from_parts(mean, pca, rotation)?, quantization_error: trace })
}

/// Bit `k` is set iff the `k`-th rotated projection is `≥ 0`.
pub fn encode_itq(sig: &ImageSignature, model: &ItqModel) -> Result<BinaryCode> {
    let p = model.project(&sig.values)?;
    let bits: Vec<bool> = p.iter().map(|x| *x >= 0.0).collect();
    Ok(BinaryCode::from_bits(sig.image_id.clone(), &bits))
}
