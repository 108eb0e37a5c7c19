//! Democratic weights: find `λ > 0` with `λ_i φ_i^T Σ_j λ_j φ_j = 1` for every `i`.
//!
//! The fixed point `λ_i ← λ_i / sqrt((K⁺λ)_i)` is iterated on the Gram matrix
//! with negative entries clamped to zero. The residual is always measured on
//! the true Gram `K`; if the scaled weights miss the tolerance, Newton's
//! method finishes on the convex potential `½ λ^T K λ - Σ_i log λ_i`, whose
//! stationary point is exactly the democratic condition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Vectors with a smaller norm receive weight zero.
pub const MIN_NORM: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DemocraticParams {
    pub max_iters: usize,
    pub tol: f64,
    pub newton_max_iters: usize,
}

impl Default for DemocraticParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-3,
            newton_max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemocraticWeights {
    pub weights: Vec<f64>,
    /// `max_i |λ_i (Kλ)_i - 1|` over the vectors that were not excluded.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn residual(k: &DMatrix<f64>, lambda: &DVector<f64>) -> f64 {
    let kl = k * lambda;
    lambda
        .iter()
        .zip(kl.iter())
        .map(|(l, s)| (l * s - 1.0).abs())
        .fold(0.0, f64::max)
}

fn potential(k: &DMatrix<f64>, lambda: &DVector<f64>) -> f64 {
    0.5 * lambda.dot(&(k * lambda)) - lambda.iter().map(|l| l.ln()).sum::<f64>()
}

/// `s·u` with the scalar `s` minimizing the potential along `u`.
fn best_scale(k: &DMatrix<f64>, u: DVector<f64>) -> Option<DVector<f64>> {
    let q = u.dot(&(k * &u));
    (q > 0.0).then(|| {
        let s = (u.len() as f64 / q).sqrt();
        u * s
    })
}

fn newton_refine(k: &DMatrix<f64>, lambda: &mut DVector<f64>, params: &DemocraticParams) -> usize {
    let m = lambda.len();
    for it in 0..params.newton_max_iters {
        if residual(k, lambda) <= params.tol * 1e-3 {
            return it;
        }
        let kl = k * &*lambda;
        let grad = DVector::from_fn(m, |i, _| kl[i] - 1.0 / lambda[i]);
        let mut h = k.clone();
        for i in 0..m {
            h[(i, i)] += 1.0 / (lambda[i] * lambda[i]);
        }
        let Some(ch) = h.cholesky() else { return it };
        let step = -ch.solve(&grad);
        let slope = grad.dot(&step);
        let f0 = potential(k, lambda);
        let mut t = 1.0;
        // largest step keeping every weight positive
        for i in 0..m {
            if step[i] < 0.0 {
                t = f64::min(t, -0.99 * lambda[i] / step[i]);
            }
        }
        let mut moved = false;
        for _ in 0..60 {
            let trial = &*lambda + &step * t;
            if potential(k, &trial) <= f0 + 1e-4 * t * slope {
                *lambda = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return it;
        }
    }
    params.newton_max_iters
}

/// Democratic weights for the columns of `vectors` (`D x m`).
pub fn democratic_weights(vectors: &DMatrix<f64>, params: &DemocraticParams) -> Result<DemocraticWeights> {
    let m = vectors.ncols();
    if m == 0 {
        return Err(Error::InvalidArgument("no vectors to aggregate".into()));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("whitened vectors"));
    }
    let active: Vec<usize> = (0..m)
        .filter(|&i| vectors.column(i).norm() >= MIN_NORM)
        .collect();
    if active.is_empty() {
        return Err(Error::DegenerateInput);
    }
    let sub = vectors.select_columns(&active);
    let k = sub.transpose() * &sub;
    let ma = active.len();

    let kp = k.map(|v| v.max(0.0));

    let mut lambda = DVector::from_element(ma, 1.0);
    let mut iterations = 0;
    let mut res = residual(&k, &lambda);
    while res > params.tol && iterations < params.max_iters {
        let kl = &kp * &lambda;
        for i in 0..ma {
            lambda[i] /= kl[i].sqrt();
        }
        iterations += 1;
        res = residual(&k, &lambda);
    }
    if res > params.tol {
        // Start from the better of the scaled iterate and the scaled uniform
        // vector; the scaling can stall near the boundary for parallel vectors.
        let uniform = DVector::from_element(ma, 1.0);
        lambda = [lambda, uniform]
            .into_iter()
            .filter(|l| l.iter().all(|v| *v > 0.0 && v.is_finite()))
            .filter_map(|l| best_scale(&k, l))
            .min_by(|a, b| potential(&k, a).total_cmp(&potential(&k, b)))
            .ok_or(Error::DegenerateInput)?;
        iterations += newton_refine(&k, &mut lambda, params);
        res = residual(&k, &lambda);
    }

    let mut weights = vec![0.0; m];
    for (p, &i) in active.iter().enumerate() {
        weights[i] = lambda[p];
    }
    Ok(DemocraticWeights {
        weights,
        residual: res,
        iterations,
        converged: res <= params.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_unit_vector() {
        let v = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
        let w = democratic_weights(&v, &DemocraticParams::default()).unwrap();
        assert!((w.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_get_inverse_norms() {
        let norms = [1.0, 2.0, 0.5, 3.0];
        let v = DMatrix::from_fn(4, 4, |r, c| if r == c { norms[c] } else { 0.0 });
        let w = democratic_weights(&v, &DemocraticParams::default()).unwrap();
        // the condition reads λ_i² c_i² = 1
        for (l, c) in w.weights.iter().zip(norms) {
            assert!((l * c - 1.0).abs() < 1e-3);
        }
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let w = democratic_weights(&v, &DemocraticParams::default()).unwrap();
        assert_eq!(w.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn negative_correlations_still_converge() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = DMatrix::from_fn(50, 30, |_, _| StandardNormal.sample(&mut rng));
        let w = democratic_weights(&v, &DemocraticParams::default()).unwrap();
        assert!(w.converged, "{w:?}");
        assert!(w.weights.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn parallel_vectors() {
        let v = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let w = democratic_weights(&v, &DemocraticParams::default()).unwrap();
        assert!(w.converged, "{w:?}");
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (l, e) in w.weights.iter().zip([h, h / 2.0, 1.0 / 3.0]) {
            assert!((l - e).abs() < 1e-3, "{w:?}");
        }
    }

    #[test]
    fn zero_vectors_are_excluded_or_rejected() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let w = democratic_weights(&v, &DemocraticParams::default()).unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0]);
        let z = DMatrix::zeros(3, 2);
        assert!(matches!(democratic_weights(&z, &DemocraticParams::default()), Err(Error::DegenerateInput)));
    }
}
