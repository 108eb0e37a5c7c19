//! From per-descriptor embeddings to one normalized image signature.

mod democratic;
mod normalize;
mod rotation;
mod whitening;

use nalgebra::DMatrix;

pub use democratic::{democratic_weights, DemocraticParams, DemocraticWeights, MIN_NORM};
pub use normalize::{l2_normalize, power_law, ImageSignature};
pub use rotation::{apply_rn, fit_rotation_norm, RotationNormModel};
pub(crate) use whitening::covariance_eigen;
pub use whitening::{fit_whitening, WhiteningModel, DEFAULT_EPS_REL};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationMode {
    #[default]
    Democratic,
    Sum,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Democratic => "democratic",
            Self::Sum => "sum",
        }
    }
}

impl std::fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "democratic" => Ok(Self::Democratic),
            "sum" => Ok(Self::Sum),
            _ => Err(Error::InvalidArgument(format!("unknown aggregation mode {s:?}"))),
        }
    }
}

/// `ψ = Σ_i λ_i φ_w(x_i)` over the columns of `phi_w`.
pub fn aggregate_image(phi_w: &DMatrix<f64>, weights: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_dim(phi_w.ncols(), weights.len())?;
    let w = nalgebra::DVector::from_column_slice(weights);
    Ok((phi_w * w).data.into())
}

/// Weights, pooling, power law and l2 normalization for one image.
///
/// An image without descriptors, or whose whitened vectors are all zero,
/// yields a flagged zero signature instead of an error.
pub fn signature(
    image_id: &str,
    phi_w: &DMatrix<f64>,
    mode: AggregationMode,
    alpha: f64,
    params: &DemocraticParams,
) -> Result<(ImageSignature, Option<DemocraticWeights>)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be in (0, 1]")));
    }
    let zero = |dim| ImageSignature { image_id: image_id.to_owned(), values: vec![0.0; dim], degenerate: true };
    if phi_w.ncols() == 0 {
        return Ok((zero(phi_w.nrows()), None));
    }
    let (weights, report) = match mode {
        AggregationMode::Sum => (vec![1.0; phi_w.ncols()], None),
        AggregationMode::Democratic => match democratic_weights(phi_w, params) {
            Ok(r) => {
                if !r.converged {
                    log::warn!("democratic weights for {image_id} stopped at residual {:.3e}", r.residual);
                }
                (r.weights.clone(), Some(r))
            }
            Err(Error::DegenerateInput) => return Ok((zero(phi_w.nrows()), None)),
            Err(e) => return Err(e),
        },
    };
    let psi = aggregate_image(phi_w, &weights)?;
    let (values, degenerate) = l2_normalize(power_law(&psi, alpha));
    Ok((ImageSignature { image_id: image_id.to_owned(), values, degenerate }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn democratic_signature_balances_contributions() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let (sig, rep) = signature("a", &phi, AggregationMode::Democratic, 1.0, &DemocraticParams::default()).unwrap();
        let rep = rep.unwrap();
        assert!(rep.converged);
        assert!(!sig.degenerate);
        let n: f64 = sig.values.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_leaves_signature_unchanged() {
        let phi = DMatrix::from_fn(5, 7, |r, c| ((r * 7 + c) as f64 * 0.37).sin());
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let phi_p = phi.select_columns(&perm);
        let p = DemocraticParams::default();
        let (a, ra) = signature("x", &phi, AggregationMode::Democratic, 0.5, &p).unwrap();
        let (b, rb) = signature("x", &phi_p, AggregationMode::Democratic, 0.5, &p).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-6);
        }
        let (ra, rb) = (ra.unwrap(), rb.unwrap());
        for (i, &j) in perm.iter().enumerate() {
            assert!((rb.weights[i] - ra.weights[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_and_zero_images_are_flagged() {
        let p = DemocraticParams::default();
        let (s, _) = signature("e", &DMatrix::zeros(4, 0), AggregationMode::Democratic, 0.5, &p).unwrap();
        assert!(s.degenerate);
        let (s, _) = signature("z", &DMatrix::zeros(4, 3), AggregationMode::Sum, 0.5, &p).unwrap();
        assert!(s.degenerate);
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Sum".parse::<AggregationMode>().unwrap(), AggregationMode::Sum);
        assert!("max".parse::<AggregationMode>().is_err());
    }
}
