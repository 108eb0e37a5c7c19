use nalgebra::{DMatrix, DVector};

use super::{CodingModel, Coefficients};
use crate::error::{check_dim, Error, Result};
use crate::tensor::l1_cubed;

/// Smallest accepted ratio of extreme singular values of the bordered
/// system before the unregularized problem is declared singular.
const MIN_SINGULAR_RATIO: f64 = 1e-12;

/// Closed-form minimizer of `½‖x - Cγ‖² + (μ/2)‖γ‖² Σ_j ‖x - v_j‖₁³` subject to `1^T γ = 1`:
///
/// `γ = B (C^T x - λ 1)` with `B = (C^T C + aμ I)^{-1}`, `a = Σ_j ‖x - v_j‖₁³`
/// and `λ = (1^T B C^T x - 1) / (1^T B 1)`.
///
/// Accepts models of either variant, so it also serves as a warm start.
pub fn ffaemb_gamma(x: &[f64], model: &CodingModel) -> Result<Coefficients> {
    let d = model.dim();
    let n = model.n_anchors();
    check_dim(d, x.len())?;

    let mut asum = 0.0;
    let mut ctx = DVector::zeros(n);
    for j in 0..n {
        let v = model.anchor(j);
        asum += l1_cubed(x, v);
        ctx[j] = v.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    let ridge = asum * model.mu();

    if ridge == 0.0 {
        return unregularized(model.gram(), &ctx);
    }
    let mut sys: DMatrix<f64> = model.gram().clone();
    for j in 0..n {
        sys[(j, j)] += ridge;
    }
    let chol = sys.cholesky().ok_or_else(singular)?;
    let y_x = chol.solve(&ctx);
    let y_1 = chol.solve(&DVector::from_element(n, 1.0));
    let denom = y_1.sum();
    let lambda = (y_x.sum() - 1.0) / denom;
    let mut gamma: Vec<f64> = (0..n).map(|j| y_x[j] - lambda * y_1[j]).collect();

    // Remove roundoff drift along B1, which keeps the point on the optimal ray.
    let drift = 1.0 - gamma.iter().sum::<f64>();
    for j in 0..n {
        gamma[j] += drift * y_1[j] / denom;
    }
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("closed-form coefficients"));
    }
    Coefficients::new(gamma, 1e-10)
}

/// Constrained least squares through the bordered system
/// `[C^T C 1; 1^T 0] [γ; λ] = [C^T x; 1]`, which is nonsingular exactly when
/// the anchors are affinely independent.
fn unregularized(gram: &DMatrix<f64>, ctx: &DVector<f64>) -> Result<Coefficients> {
    let n = gram.nrows();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    k.view_mut((0, 0), (n, n)).copy_from(gram);
    for j in 0..n {
        k[(j, n)] = 1.0;
        k[(n, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(ctx);
    rhs[n] = 1.0;
    let svd = k.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() < MIN_SINGULAR_RATIO * sv.max() {
        return Err(singular());
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|e| Error::Singular(e.to_string()))?;
    let mut gamma: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let drift = (1.0 - gamma.iter().sum::<f64>()) / n as f64;
    gamma.iter_mut().for_each(|g| *g += drift);
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("closed-form coefficients"));
    }
    Coefficients::new(gamma, 1e-10)
}

fn singular() -> Error {
    Error::Singular(
        "coding system is singular; use mu > 0 or affinely independent anchors".into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::Variant;

    #[test]
    fn near_interpolation_limit() {
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let model = CodingModel::new(c, 1e-8, Variant::FFAemb).unwrap();
        let g = ffaemb_gamma(&[0.3], &model).unwrap();
        assert!((g.as_slice()[0] - 0.7).abs() < 1e-4);
        assert!((g.as_slice()[1] - 0.3).abs() < 1e-4);
    }

    #[test]
    fn heavy_regularization_tends_to_uniform() {
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, -0.5, 0.3, -0.2, 0.9]);
        let model = CodingModel::new(c, 1e6, Variant::FFAemb).unwrap();
        let g = ffaemb_gamma(&[0.2, 0.4], &model).unwrap();
        for v in g.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn rank_deficient_without_regularization_fails() {
        // three anchors on a line are affinely dependent
        let c = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        let model = CodingModel::new(c, 0.0, Variant::FFAemb).unwrap();
        assert!(matches!(ffaemb_gamma(&[0.5], &model), Err(Error::Singular(_))));
        assert!(ffaemb_gamma(&[0.5], &CodingModel::new(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]), 1e-3, Variant::FFAemb).unwrap()).is_ok());
    }

    #[test]
    fn unregularized_simplex_interpolates() {
        // d + 1 anchors: x is reproduced exactly by its barycentric coordinates
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let model = CodingModel::new(c, 0.0, Variant::FFAemb).unwrap();
        let g = ffaemb_gamma(&[0.2, 0.5], &model).unwrap();
        for (a, b) in g.as_slice().iter().zip([0.3, 0.2, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sums_to_one_tightly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = rng.random_range(3..10);
            let n = rng.random_range(2..=d.min(6));
            let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let model = CodingModel::new(c, 1e-2, Variant::FFAemb).unwrap();
            let g = ffaemb_gamma(&x, &model).unwrap();
            assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }
}
