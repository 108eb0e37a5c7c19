//! Anchor step: minimize the mean objective over `C` with `Γ` held fixed.
//!
//! Damped Newton on `vec(C)` with backtracking. The Hessian is exact away
//! from the kinks of the l1 norm: the reconstruction part is `ΓΓ^T ⊗ I_d`,
//! coupling anchors through shared samples, and the penalty part is block
//! diagonal with blocks `3μ Σ_i w_ij ‖v_j - x_i‖₁ s s^T`, `s = sign(v_j - x_i)`.

use nalgebra::{DMatrix, DVector};

use super::objective::{anchor_gradient_with, mean_objective, penalty_weight, sign};
use super::CodingModel;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStepParams {
    pub max_iters: usize,
    /// Stop once a step improves the objective by less than this fraction.
    pub rel_tol: f64,
    pub max_backtracks: usize,
}

impl Default for AnchorStepParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            rel_tol: 1e-13,
            max_backtracks: 40,
        }
    }
}

fn hessian(x: &DMatrix<f64>, gamma: &DMatrix<f64>, anchors: &DMatrix<f64>, model: &CodingModel) -> DMatrix<f64> {
    let (d, n) = anchors.shape();
    let m = x.ncols() as f64;
    let mut h = DMatrix::zeros(n * d, n * d);
    let ggt = gamma * gamma.transpose();
    for j in 0..n {
        for l in 0..n {
            let v = ggt[(j, l)] / m;
            for k in 0..d {
                h[(j * d + k, l * d + k)] = v;
            }
        }
    }
    let mu = model.mu();
    if mu == 0.0 {
        return h;
    }
    let mut s = vec![0.0; d];
    for i in 0..x.ncols() {
        let xi = x.column(i);
        let gi = gamma.column(i);
        let sq = gi.norm_squared();
        for j in 0..n {
            let w = penalty_weight(model.variant(), gi.as_slice(), j, sq);
            if w == 0.0 {
                continue;
            }
            let vj = anchors.column(j);
            let mut l1 = 0.0;
            for k in 0..d {
                let diff = vj[k] - xi[k];
                l1 += diff.abs();
                s[k] = sign(diff);
            }
            let coef = 3.0 * mu * w * l1 / m;
            let base = j * d;
            for p in 0..d {
                if s[p] == 0.0 {
                    continue;
                }
                let cp = coef * s[p];
                for q in 0..d {
                    h[(base + p, base + q)] += cp * s[q];
                }
            }
        }
    }
    h
}

/// Returns anchors whose mean objective does not exceed that of `model.anchors()`.
pub fn update_anchors(
    x: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    model: &CodingModel,
    params: &AnchorStepParams,
) -> Result<DMatrix<f64>> {
    check_dim(model.dim(), x.nrows())?;
    check_dim(model.n_anchors(), gamma.nrows())?;
    check_dim(x.ncols(), gamma.ncols())?;
    let (d, n) = model.anchors().shape();
    let (mu, variant) = (model.mu(), model.variant());
    let mut c = model.anchors().clone();
    let mut q = mean_objective(x, gamma, &c, mu, variant);

    for _ in 0..params.max_iters {
        let grad = anchor_gradient_with(x, gamma, &c, mu, variant);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("anchor gradient"));
        }
        let g = DVector::from_column_slice(grad.as_slice());
        if g.amax() == 0.0 {
            break;
        }
        let h = hessian(x, gamma, &c, model);
        let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut ridge = 1e-12 * scale;
        let step = loop {
            let mut hr = h.clone();
            for i in 0..n * d {
                hr[(i, i)] += ridge;
            }
            if let Some(ch) = hr.cholesky() {
                break -ch.solve(&g);
            }
            ridge *= 100.0;
            if ridge > scale {
                // steepest descent
                break -&g;
            }
        };
        let slope = g.dot(&step);
        if !(slope < 0.0) {
            break;
        }
        let step = DMatrix::from_column_slice(d, n, step.as_slice());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..params.max_backtracks {
            let trial = &c + &step * t;
            let qt = mean_objective(x, gamma, &trial, mu, variant);
            if qt <= q + 1e-4 * t * slope {
                accepted = Some((trial, qt));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, qt)) = accepted else { break };
        let gain = q - qt;
        c = trial;
        q = qt;
        if gain <= params.rel_tol * q.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{objective, Variant};
    use rand::{Rng, SeedableRng};

    fn random_problem(rng: &mut impl Rng, d: usize, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0));
        let mut g = DMatrix::from_fn(n, m, |_, _| rng.random_range(-0.2..1.0));
        for mut col in g.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        (x, g, c)
    }

    #[test]
    fn least_squares_limit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (x, g, c) = random_problem(&mut rng, 4, 3, 40);
        let model = CodingModel::new(c, 0.0, Variant::FAemb).unwrap();
        let got = update_anchors(&x, &g, &model, &AnchorStepParams::default()).unwrap();
        let ggt = &g * g.transpose();
        let want = &x * g.transpose() * ggt.try_inverse().unwrap();
        assert!((got - want).amax() < 1e-6);
    }

    #[test]
    fn never_increases_objective() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for variant in [Variant::FAemb, Variant::FFAemb] {
            for _ in 0..5 {
                let (x, g, c) = random_problem(&mut rng, 5, 4, 60);
                let model = CodingModel::new(c, 0.1, variant).unwrap();
                let before = objective(&x, &g, &model).unwrap();
                let got = update_anchors(&x, &g, &model, &AnchorStepParams::default()).unwrap();
                let after = objective(&x, &g, &CodingModel::new(got, 0.1, variant).unwrap()).unwrap();
                assert!(after <= before + 1e-12);
            }
        }
    }
}
