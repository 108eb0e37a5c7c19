use nalgebra::DMatrix;

use super::{CodingModel, Variant, FEASIBILITY_TOL};
use crate::error::{check_dim, Error, Result};
use crate::tensor::l1_cubed;

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Weight multiplying `‖x - v_j‖₁³` in the penalty for one sample.
#[inline]
pub(crate) fn penalty_weight(variant: Variant, gamma: &[f64], j: usize, sq_norm: f64) -> f64 {
    match variant {
        Variant::FAemb => gamma[j].abs(),
        Variant::FFAemb => sq_norm,
    }
}

fn sample_objective_with(x: &[f64], gamma: &[f64], anchors: &DMatrix<f64>, mu: f64, variant: Variant) -> f64 {
    let d = x.len();
    let c = anchors.as_slice();
    let mut recon = 0.0;
    for k in 0..d {
        let mut xk = 0.0;
        for (j, g) in gamma.iter().enumerate() {
            xk += c[j * d + k] * g;
        }
        let r = x[k] - xk;
        recon += r * r;
    }
    let sq: f64 = gamma.iter().map(|g| g * g).sum();
    let mut pen = 0.0;
    for j in 0..gamma.len() {
        pen += penalty_weight(variant, gamma, j, sq) * l1_cubed(x, &c[j * d..(j + 1) * d]);
    }
    0.5 * recon + 0.5 * mu * pen
}

/// Per-sample objective `½‖x - Cγ‖² + (μ/2)·penalty`, the penalty depending on the variant.
pub fn sample_objective(x: &[f64], gamma: &[f64], model: &CodingModel) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.n_anchors(), gamma.len())?;
    Ok(sample_objective_with(x, gamma, model.anchors(), model.mu(), model.variant()))
}

pub(crate) fn mean_objective(x: &DMatrix<f64>, gamma: &DMatrix<f64>, anchors: &DMatrix<f64>, mu: f64, variant: Variant) -> f64 {
    let m = x.ncols();
    let total: f64 = (0..m)
        .map(|i| {
            sample_objective_with(
                x.column(i).as_slice(),
                gamma.column(i).as_slice(),
                anchors,
                mu,
                variant,
            )
        })
        .sum();
    total / m as f64
}

fn check_columns(x: &DMatrix<f64>, gamma: &DMatrix<f64>, anchors: &DMatrix<f64>) -> Result<()> {
    check_dim(anchors.nrows(), x.nrows())?;
    check_dim(anchors.ncols(), gamma.nrows())?;
    check_dim(x.ncols(), gamma.ncols())?;
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    for col in gamma.column_iter() {
        let sum = col.sum();
        if !sum.is_finite() || (sum - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::Infeasible { sum });
        }
    }
    Ok(())
}

/// Mean objective over the columns of `x` (`d x m`) and `gamma` (`n x m`).
pub fn objective(x: &DMatrix<f64>, gamma: &DMatrix<f64>, model: &CodingModel) -> Result<f64> {
    check_columns(x, gamma, model.anchors())?;
    Ok(mean_objective(x, gamma, model.anchors(), model.mu(), model.variant()))
}

/// Gradient of [`sample_objective`] with respect to `γ`, using `sign(0) = 0`.
pub fn gamma_gradient(x: &[f64], gamma: &[f64], model: &CodingModel) -> Result<Vec<f64>> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.n_anchors(), gamma.len())?;
    let c = model.anchors();
    let g = nalgebra::DVector::from_column_slice(gamma);
    let xv = nalgebra::DVector::from_column_slice(x);
    let smooth = c.transpose() * (c * &g - xv);
    let a: Vec<f64> = c.column_iter().map(|v| l1_cubed(x, v.as_slice())).collect();
    let mu = model.mu();
    Ok(match model.variant() {
        Variant::FAemb => (0..gamma.len())
            .map(|j| smooth[j] + 0.5 * mu * sign(gamma[j]) * a[j])
            .collect(),
        Variant::FFAemb => {
            let asum: f64 = a.iter().sum();
            (0..gamma.len()).map(|j| smooth[j] + mu * asum * gamma[j]).collect()
        }
    })
}

/// Gradient of the mean objective with respect to the anchors, shaped like `C`.
pub fn anchor_gradient(x: &DMatrix<f64>, gamma: &DMatrix<f64>, model: &CodingModel) -> Result<DMatrix<f64>> {
    check_columns(x, gamma, model.anchors())?;
    Ok(anchor_gradient_with(x, gamma, model.anchors(), model.mu(), model.variant()))
}

pub(crate) fn anchor_gradient_with(
    x: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    anchors: &DMatrix<f64>,
    mu: f64,
    variant: Variant,
) -> DMatrix<f64> {
    let m = x.ncols() as f64;
    let d = anchors.nrows();
    let mut grad = (anchors * gamma - x) * gamma.transpose();
    for i in 0..x.ncols() {
        let xi = x.column(i);
        let gi = gamma.column(i);
        let sq = gi.norm_squared();
        for j in 0..anchors.ncols() {
            let w = penalty_weight(variant, gi.as_slice(), j, sq);
            if w == 0.0 {
                continue;
            }
            let vj = anchors.column(j);
            let l1: f64 = (0..d).map(|k| (vj[k] - xi[k]).abs()).sum();
            let coef = 1.5 * mu * w * l1 * l1;
            for k in 0..d {
                grad[(k, j)] += coef * sign(vj[k] - xi[k]);
            }
        }
    }
    grad / m
}
