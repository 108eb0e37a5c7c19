//! Equality-constrained Newton coder for the l1-weighted objective
//!
//! ```text
//! min_γ ½‖x - Cγ‖² + (μ/2) Σ_j |γ_j| a_j    s.t. 1^T γ = 1,   a_j = ‖x - v_j‖₁³
//! ```
//!
//! Each iteration solves the bordered system `[H 1; 1^T 0][Δ; w] = [-∇Q; 0]`
//! with `H = C^T C`, starting from the feasible point `γ = 1/n`, so every
//! iterate satisfies the constraint. The objective is piecewise quadratic: a
//! step that would carry a coefficient through zero is cut at the kink and
//! the coefficient is pinned there, and a pinned coefficient is released
//! when its subgradient condition fails. Steps are damped by the configured
//! step size until the Newton decrement satisfies `δ²/2 <= ε`; from then on
//! full steps are taken until the KKT residual reaches the stationarity
//! target, which on the final quadratic piece takes one or two steps.

use nalgebra::{DMatrix, DVector};

use super::objective::sign;
use super::{CodingModel, Coefficients, SolverParams, Variant};
use crate::error::{check_dim, Error, Result};
use crate::tensor::l1_cubed;

/// Convergence metadata returned alongside the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    /// Total Newton iterations, damped and full-step.
    pub iterations: usize,
    /// Iteration at which `δ²/2 <= ε` first held.
    pub decrement_reached_at: Option<usize>,
    /// KKT residual at the returned point, see [`stationarity`].
    pub stationarity: f64,
    /// `false` when the iteration budget ran out first.
    pub converged: bool,
}

struct Problem {
    gram: DMatrix<f64>,
    ctx: Vec<f64>,
    /// `(μ/2) a_j`
    pen: Vec<f64>,
}

impl Problem {
    fn new(x: &[f64], model: &CodingModel) -> Self {
        let n = model.n_anchors();
        let mut ctx = Vec::with_capacity(n);
        let mut pen = Vec::with_capacity(n);
        for j in 0..n {
            let v = model.anchor(j);
            ctx.push(v.iter().zip(x).map(|(a, b)| a * b).sum());
            pen.push(0.5 * model.mu() * l1_cubed(x, v));
        }
        Self {
            gram: model.gram().clone(),
            ctx,
            pen,
        }
    }

    /// `C^T (Cγ - x)`
    fn smooth_grad(&self, gamma: &[f64]) -> Vec<f64> {
        let n = gamma.len();
        (0..n)
            .map(|j| {
                let mut s = -self.ctx[j];
                for h in 0..n {
                    s += self.gram[(j, h)] * gamma[h];
                }
                s
            })
            .collect()
    }

    fn residual(&self, gamma: &[f64]) -> f64 {
        let r = self.smooth_grad(gamma);
        kkt_residual(&r, &self.pen, gamma)
    }
}

/// Subgradient-aware KKT residual for the l1-weighted problem.
///
/// With `w` the multiplier estimate over the nonzero coefficients, it is the
/// largest of `|r_j + p_j sign(γ_j) + w|` over nonzero `γ_j` and
/// `max(0, |r_j + w| - p_j)` over zero ones.
fn kkt_residual(r: &[f64], pen: &[f64], gamma: &[f64]) -> f64 {
    let free: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j] != 0.0).collect();
    if free.is_empty() {
        return f64::INFINITY;
    }
    let g = |j: usize| r[j] + pen[j] * sign(gamma[j]);
    let w = -free.iter().map(|&j| g(j)).sum::<f64>() / free.len() as f64;
    let mut res = 0.0f64;
    for j in 0..gamma.len() {
        let e = if gamma[j] != 0.0 {
            (g(j) + w).abs()
        } else {
            ((r[j] + w).abs() - pen[j]).max(0.0)
        };
        res = res.max(e);
    }
    res
}

/// Lagrangian stationarity of `γ` for the model's objective.
///
/// For the FAemb objective this is the subgradient form of `‖∇Q + w 1‖∞`
/// described on [`kkt_residual`]; for F-FAemb it is the plain gradient form.
pub fn stationarity(x: &[f64], gamma: &[f64], model: &CodingModel) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.n_anchors(), gamma.len())?;
    let p = Problem::new(x, model);
    let r = p.smooth_grad(gamma);
    Ok(match model.variant() {
        Variant::FAemb => kkt_residual(&r, &p.pen, gamma),
        Variant::FFAemb => {
            let asum: f64 = p.pen.iter().sum::<f64>() * 2.0;
            let g: Vec<f64> = (0..gamma.len())
                .map(|j| r[j] + asum * gamma[j])
                .collect();
            let w = -g.iter().sum::<f64>() / g.len() as f64;
            g.iter().fold(0.0f64, |m, gj| m.max((gj + w).abs()))
        }
    })
}

/// Relative size below which a pivot or eigenvalue of the projected Hessian counts as zero.
const SINGULAR_TOL: f64 = 1e-12;

enum FaceStep {
    /// Newton step on the face; `w` is the multiplier of `1^T γ = 1` at its end point.
    Newton { delta: Vec<f64>, w: f64 },
    /// The objective is linear along `delta` (a null direction of the
    /// Hessian); follow it to the next kink.
    Ray { delta: Vec<f64> },
}

/// Newton step restricted to the coefficients in `free`, with the constraint
/// eliminated through `Δ = Z t`, `Z = [e_i − e_k]`.
///
/// When the projected Hessian is singular (more free anchors than the
/// dimension supports), an orthonormal eigendecomposition separates null
/// directions; if the gradient has a component along them the objective is
/// unbounded linearly there and a ray step is returned.
fn face_step(gram: &DMatrix<f64>, free: &[usize], g: &[f64]) -> Result<FaceStep> {
    let k = free.len();
    if k == 1 {
        return Ok(FaceStep::Newton { delta: vec![0.0], w: -g[0] });
    }
    let last = free[k - 1];
    let hz = DMatrix::from_fn(k - 1, k - 1, |a, b| {
        let (i, l) = (free[a], free[b]);
        gram[(i, l)] - gram[(i, last)] - gram[(last, l)] + gram[(last, last)]
    });
    let gz = DVector::from_fn(k - 1, |a, _| g[a] - g[k - 1]);
    let scale = hz.diagonal().amax();

    let delta = match hz.clone().cholesky() {
        Some(ch) if scale > 0.0 && ch.l_dirty().diagonal().min().powi(2) > SINGULAR_TOL * scale => {
            let t = ch.solve(&(-&gz));
            let mut delta: Vec<f64> = t.iter().copied().collect();
            delta.push(-t.sum());
            delta
        }
        _ => return singular_face_step(gram, free, g),
    };
    Ok(FaceStep::Newton { w: multiplier(gram, free, g, &delta), delta })
}

/// `w` minimizing `‖g + H Δ + w 1‖` on the face.
fn multiplier(gram: &DMatrix<f64>, free: &[usize], g: &[f64], delta: &[f64]) -> f64 {
    let k = free.len();
    let total: f64 = (0..k)
        .map(|p| g[p] + (0..k).map(|q| gram[(free[p], free[q])] * delta[q]).sum::<f64>())
        .sum();
    -total / k as f64
}

fn singular_face_step(gram: &DMatrix<f64>, free: &[usize], g: &[f64]) -> Result<FaceStep> {
    let k = free.len();
    // orthonormal basis of {u : 1^T u = 0}
    let z = DMatrix::from_fn(k, k - 1, |i, a| if i == a { 1.0 } else if i == k - 1 { -1.0 } else { 0.0 });
    let q = z.qr().q();
    let h = DMatrix::from_fn(k, k, |p, r| gram[(free[p], free[r])]);
    let hq = q.transpose() * &h * &q;
    let hq = (&hq + hq.transpose()) * 0.5;
    let eig = hq.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let gq = q.transpose() * DVector::from_column_slice(g);
    let tol = SINGULAR_TOL.sqrt() * top.max(f64::MIN_POSITIVE);

    let mut ray = DVector::zeros(k - 1);
    let mut newton = DVector::zeros(k - 1);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let c = v.dot(&gq);
        if lam <= tol {
            ray -= v * c;
        } else {
            newton -= v * (c / lam);
        }
    }
    let gnorm = gq.amax().max(f64::MIN_POSITIVE);
    if ray.amax() > 1e-10 * gnorm.max(1.0) {
        let delta = (&q * ray).iter().copied().collect();
        return Ok(FaceStep::Ray { delta });
    }
    let delta: Vec<f64> = (&q * newton).iter().copied().collect();
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("Newton KKT system".into()));
    }
    Ok(FaceStep::Newton { w: multiplier(gram, free, g, &delta), delta })
}

/// Coefficients minimizing the l1-weighted objective by Newton's method.
pub fn faemb_gamma(x: &[f64], model: &CodingModel, params: &SolverParams) -> Result<(Coefficients, NewtonReport)> {
    check_dim(model.dim(), x.len())?;
    params.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("descriptor"));
    }
    let n = model.n_anchors();
    let prob = Problem::new(x, model);
    let release_tol = 0.1 * params.stationarity_tol;

    let mut gamma = vec![1.0 / n as f64; n];
    // +1 / -1: free with that sign, 0: pinned at zero
    let mut signs = vec![1.0f64; n];
    let mut iterations = 0;
    let mut decrement_reached_at = None;
    let mut converged = false;

    while iterations < params.newton_max_iters {
        let r = prob.smooth_grad(&gamma);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Newton gradient"));
        }
        let mut refused = vec![false; n];
        // At most one coefficient is released per iteration; the sign argument
        // for its direction only holds one release at a time.
        let mut released = false;
        let (free, grad_f, step) = loop {
            let free: Vec<usize> = (0..n).filter(|&j| signs[j] != 0.0).collect();
            let grad_f: Vec<f64> = free.iter().map(|&j| r[j] + prob.pen[j] * signs[j]).collect();
            let step = face_step(&prob.gram, &free, &grad_f)?;
            let (delta, w) = match &step {
                FaceStep::Newton { delta, w } => (delta, Some(*w)),
                FaceStep::Ray { delta } => (delta, None),
            };

            // Releases are only judged against the multiplier of a Newton step.
            let mut worst: Option<(usize, f64, f64)> = None;
            for j in 0..n {
                let Some(w) = w.filter(|_| !released) else { break };
                if signs[j] != 0.0 || refused[j] {
                    continue;
                }
                let v = r[j] + w;
                let excess = v.abs() - prob.pen[j];
                if excess > release_tol && worst.is_none_or(|(_, e, _)| excess > e) {
                    worst = Some((j, excess, v));
                }
            }
            if let Some((j, _, v)) = worst {
                signs[j] = -sign(v);
                released = true;
                continue;
            }
            // A just-released coefficient must move in the direction of its sign.
            let wrong = free
                .iter()
                .zip(delta)
                .find(|(&j, &dj)| gamma[j] == 0.0 && signs[j] * dj < 0.0)
                .map(|(&j, _)| j);
            if let Some(j) = wrong {
                signs[j] = 0.0;
                refused[j] = true;
                released = false;
                continue;
            }
            break (free, grad_f, step);
        };

        let (delta, is_ray) = match step {
            FaceStep::Newton { delta, .. } => (delta, false),
            FaceStep::Ray { delta } => (delta, true),
        };
        if !is_ray {
            let decrement_sq = -grad_f.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>();
            if decrement_reached_at.is_none() && decrement_sq / 2.0 <= params.newton_tol {
                decrement_reached_at = Some(iterations);
            }
            if decrement_reached_at.is_some() && prob.residual(&gamma) <= params.stationarity_tol {
                converged = true;
                break;
            }
        }

        // Along a ray the objective is linear: go all the way to the first kink.
        let mut t = if is_ray {
            f64::INFINITY
        } else if decrement_reached_at.is_some() {
            1.0
        } else {
            params.newton_step
        };
        let mut blocking = None;
        for (&j, &dj) in free.iter().zip(&delta) {
            if gamma[j] * dj < 0.0 && t * dj.abs() >= gamma[j].abs() {
                t = -gamma[j] / dj;
                blocking = Some(j);
            }
        }
        if !t.is_finite() {
            return Err(Error::Singular("objective unbounded along a null direction".into()));
        }
        for (&j, &dj) in free.iter().zip(&delta) {
            gamma[j] += t * dj;
        }
        if let Some(j) = blocking {
            gamma[j] = 0.0;
            signs[j] = 0.0;
        }
        iterations += 1;
    }

    let stationarity = prob.residual(&gamma);
    if !converged && stationarity <= params.stationarity_tol && decrement_reached_at.is_some() {
        converged = true;
    }
    let report = NewtonReport {
        iterations,
        decrement_reached_at,
        stationarity,
        converged,
    };
    Ok((Coefficients::new(gamma, 1e-8)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::sample_objective;
    use rand::{Rng, SeedableRng};

    fn random_model(rng: &mut impl Rng, d: usize, n: usize, mu: f64) -> CodingModel {
        let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        CodingModel::new(c, mu, Variant::FAemb).unwrap()
    }

    #[test]
    fn dominates_uniform_and_one_hot() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let params = SolverParams::default();
        for _ in 0..40 {
            let d = rng.random_range(2..8);
            let n = rng.random_range(2..6);
            let model = random_model(&mut rng, d, n, 0.05);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (g, rep) = faemb_gamma(&x, &model, &params).unwrap();
            assert!(rep.converged, "{rep:?}");
            let q = sample_objective(&x, g.as_slice(), &model).unwrap();
            let qu = sample_objective(&x, Coefficients::uniform(n).as_slice(), &model).unwrap();
            assert!(q <= qu + 1e-12);
            for j in 0..n {
                let qj = sample_objective(&x, Coefficients::one_hot(n, j).as_slice(), &model).unwrap();
                assert!(q <= qj + 1e-12);
            }
        }
    }

    #[test]
    fn anchor_with_large_penalty_yields_feasible_point() {
        let c = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let model = CodingModel::new(c, 10.0, Variant::FAemb).unwrap();
        let (g, rep) = faemb_gamma(&[0.0, 0.0], &model, &SolverParams::default()).unwrap();
        assert!(rep.converged);
        assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // x sits on anchor 0, so the one-hot code at 0 is optimal
        assert!((g.as_slice()[0] - 1.0).abs() < 1e-9, "{:?}", g);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 6, 4, 0.01);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = SolverParams {
            newton_max_iters: 2,
            ..Default::default()
        };
        let (g, rep) = faemb_gamma(&x, &model, &params).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 3, 2, 0.01);
        assert!(faemb_gamma(&[0.0, f64::NAN, 1.0], &model, &SolverParams::default()).is_err());
    }
}
