//! Approximation bounds and a harness that checks them against an explicit
//! function with known derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::tensor::l1_cubed;

fn anchor(anchors: &DMatrix<f64>, j: usize) -> &[f64] {
    let d = anchors.nrows();
    &anchors.as_slice()[j * d..(j + 1) * d]
}

/// `(M/6) Σ_j |γ_j| ‖x - v_j‖₁³`
pub fn bound_faemb(x: &[f64], gamma: &[f64], anchors: &DMatrix<f64>, lipschitz: f64) -> Result<f64> {
    check_dim(anchors.nrows(), x.len())?;
    check_dim(anchors.ncols(), gamma.len())?;
    let s: f64 = gamma
        .iter()
        .enumerate()
        .map(|(j, g)| g.abs() * l1_cubed(x, anchor(anchors, j)))
        .sum();
    Ok(lipschitz / 6.0 * s)
}

/// `(n M/6) ‖γ‖₂² Σ_j ‖x - v_j‖₁³`
pub fn bound_ffaemb(x: &[f64], gamma: &[f64], anchors: &DMatrix<f64>, lipschitz: f64) -> Result<f64> {
    check_dim(anchors.nrows(), x.len())?;
    let n = anchors.ncols();
    check_dim(n, gamma.len())?;
    let sq: f64 = gamma.iter().map(|g| g * g).sum();
    let a: f64 = (0..n).map(|j| l1_cubed(x, anchor(anchors, j))).sum();
    Ok(n as f64 * lipschitz / 6.0 * sq * a)
}

/// A scalar function with derivative oracles.
pub trait TaylorOracle {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// `None` when second derivatives are unavailable.
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>>;
}

pub struct BoundInputs<'a> {
    pub oracle: &'a dyn TaylorOracle,
    /// Lipschitz constant of the order-`k` derivative.
    pub lipschitz: f64,
    /// Taylor order, 1 or 2.
    pub order: u32,
}

/// Returns `(|f(x) - Σ_j γ_j T_j(x)|, M/(k+1)! Σ_j |γ_j| ‖x - v_j‖₁^{k+1})`,
/// where `T_j` is the order-`k` Taylor polynomial of `f` at anchor `v_j`.
pub fn taylor_approx_error(inputs: &BoundInputs<'_>, x: &[f64], gamma: &[f64], anchors: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_dim(anchors.nrows(), x.len())?;
    check_dim(anchors.ncols(), gamma.len())?;
    if !(inputs.lipschitz > 0.0 && inputs.lipschitz.is_finite()) {
        return Err(Error::InvalidArgument("Lipschitz constant must be finite and > 0".into()));
    }
    let k = inputs.order;
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidArgument(format!("Taylor order must be 1 or 2, got {k}")));
    }
    let f = inputs.oracle;
    let mut approx = 0.0;
    let mut rhs = 0.0;
    let fact = if k == 1 { 2.0 } else { 6.0 };
    for (j, &g) in gamma.iter().enumerate() {
        let v = anchor(anchors, j);
        let r = DVector::from_iterator(x.len(), x.iter().zip(v).map(|(a, b)| a - b));
        let grad = DVector::from_vec(f.gradient(v));
        let mut t = f.value(v) + grad.dot(&r);
        if k == 2 {
            let h = f
                .hessian(v)
                .ok_or_else(|| Error::InvalidArgument("order 2 needs a Hessian oracle".into()))?;
            t += 0.5 * r.dot(&(&h * &r));
        }
        approx += g * t;
        let l1 = r.lp_norm(1);
        rhs += g.abs() * l1.powi(k as i32 + 1);
    }
    Ok(((f.value(x) - approx).abs(), inputs.lipschitz / fact * rhs))
}
