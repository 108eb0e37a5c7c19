use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::anchors::{update_anchors, AnchorStepParams};
use super::objective::mean_objective;
use super::{faemb_gamma, ffaemb_gamma, kmeans_init, sample_objective, CodingModel, SolverParams, Variant};
use crate::error::{Error, Result};

/// Output of [`train_coding`].
#[derive(Debug, Clone)]
pub struct TrainedCoding {
    pub model: CodingModel,
    /// Coefficients of the training samples, `n x m`.
    pub gamma: DMatrix<f64>,
    /// Mean objective after initialization (entry 0) and after every outer iteration.
    pub trace: Vec<f64>,
}

fn code_all(x: &DMatrix<f64>, model: &CodingModel, params: &SolverParams) -> Result<DMatrix<f64>> {
    let n = model.n_anchors();
    let cols: Vec<Vec<f64>> = (0..x.ncols())
        .into_par_iter()
        .map(|i| {
            let xi = x.column(i);
            match model.variant() {
                Variant::FAemb => faemb_gamma(xi.as_slice(), model, params).map(|(g, _)| g.into_vec()),
                Variant::FFAemb => ffaemb_gamma(xi.as_slice(), model).map(|g| g.into_vec()),
            }
        })
        .collect::<Result<_>>()?;
    let mut gamma = DMatrix::zeros(n, x.ncols());
    for (i, c) in cols.iter().enumerate() {
        gamma.column_mut(i).copy_from_slice(c);
    }
    Ok(gamma)
}

/// Alternating minimization of the coding objective over `Γ` and `C`,
/// initialized with k-means anchors.
///
/// Stops after `params.max_outer_iters` rounds or once the objective moves by
/// less than `params.outer_tol`.
pub fn train_coding(
    x: &DMatrix<f64>,
    n: usize,
    mu: f64,
    variant: Variant,
    params: &SolverParams,
    seed: u64,
) -> Result<TrainedCoding> {
    params.validate()?;
    if n < 2 || x.ncols() < n {
        return Err(Error::InvalidArgument(format!(
            "training needs m >= n >= 2 (m = {}, n = {n})",
            x.ncols()
        )));
    }
    let anchors = kmeans_init(x, n, seed)?;
    let mut model = CodingModel::new(anchors, mu, variant)?;
    let mut gamma = code_all(x, &model, params)?;
    let mut trace = vec![mean_objective(x, &gamma, model.anchors(), mu, variant)];
    debug!("coding init: Q = {:.9e}", trace[0]);

    for t in 1..=params.max_outer_iters {
        if t > 1 {
            let fresh = code_all(x, &model, params)?;
            // Keep a previous coefficient whenever the solver's answer is no better.
            for i in 0..x.ncols() {
                let xi = x.column(i);
                let old = sample_objective(xi.as_slice(), gamma.column(i).as_slice(), &model)?;
                let new = sample_objective(xi.as_slice(), fresh.column(i).as_slice(), &model)?;
                if new <= old {
                    gamma.set_column(i, &fresh.column(i));
                }
            }
        }
        let anchors = update_anchors(x, &gamma, &model, &AnchorStepParams::default())?;
        model = CodingModel::new(anchors, mu, variant)?;
        let q = mean_objective(x, &gamma, model.anchors(), mu, variant);
        let prev = *trace.last().unwrap();
        trace.push(q);
        debug!("coding iter {t}: Q = {q:.9e}");
        if (prev - q).abs() < params.outer_tol {
            break;
        }
    }
    Ok(TrainedCoding {
        model,
        gamma,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn data(seed: u64, d: usize, m: usize) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_iterations_returns_kmeans_state() {
        let x = data(1, 4, 100);
        let params = SolverParams {
            max_outer_iters: 0,
            ..Default::default()
        };
        let out = train_coding(&x, 3, 1e-2, Variant::FFAemb, &params, 5).unwrap();
        assert_eq!(out.model.anchors(), &kmeans_init(&x, 3, 5).unwrap());
        assert_eq!(out.trace.len(), 1);
        let g = ffaemb_gamma(x.column(7).as_slice(), &out.model).unwrap();
        assert_eq!(out.gamma.column(7).as_slice(), g.as_slice());
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let x = data(2, 5, 300);
        for variant in [Variant::FAemb, Variant::FFAemb] {
            let params = SolverParams {
                max_outer_iters: 6,
                ..Default::default()
            };
            let a = train_coding(&x, 4, 1e-2, variant, &params, 3).unwrap();
            for w in a.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", a.trace);
            }
            let b = train_coding(&x, 4, 1e-2, variant, &params, 3).unwrap();
            assert_eq!(a.model, b.model);
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn rejects_too_few_samples() {
        let x = data(3, 2, 3);
        assert!(train_coding(&x, 4, 0.0, Variant::FFAemb, &SolverParams::default(), 0).is_err());
    }
}
