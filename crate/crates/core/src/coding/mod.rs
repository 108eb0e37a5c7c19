//! Coordinate coding: anchors `C` learned offline and per-descriptor
//! coefficients `γ(x)` with `1^T γ = 1`.
//!
//! Two coders are provided. [`faemb_gamma`] minimizes the l1-weighted bound
//! with an equality-constrained Newton method; [`ffaemb_gamma`] minimizes the
//! relaxed l2 bound in closed form.

mod anchors;
mod closed_form;
mod kmeans;
mod newton;
mod objective;
mod train;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::descriptor::DescriptorSet;
use crate::error::{check_dim, Error, Result};

pub use anchors::{update_anchors, AnchorStepParams};
pub use closed_form::ffaemb_gamma;
pub use kmeans::{kmeans_init, KMEANS_MAX_ITERS};
pub use newton::{faemb_gamma, stationarity, NewtonReport};
pub use objective::{anchor_gradient, gamma_gradient, objective, sample_objective};
pub use train::{train_coding, TrainedCoding};

/// Default regularization weight of the bound term.
pub const DEFAULT_MU: f64 = 1e-2;

/// Tolerance on `1^T γ = 1` accepted by the objective and embedding.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Which bound the coefficients minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `Σ_j |γ_j| ‖x - v_j‖₁³`, solved iteratively.
    FAemb,
    /// `‖γ‖₂² Σ_j ‖x - v_j‖₁³`, solved in closed form.
    FFAemb,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::FAemb => "faemb",
            Variant::FFAemb => "ffaemb",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "faemb" => Ok(Variant::FAemb),
            "ffaemb" => Ok(Variant::FFAemb),
            _ => Err(Error::InvalidArgument(format!(
                "unknown variant `{s}` (expected faemb or ffaemb)"
            ))),
        }
    }
}

/// Anchor matrix (`d x n`, one anchor per column), regularizer and variant.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingModel {
    anchors: DMatrix<f64>,
    mu: f64,
    variant: Variant,
    gram: DMatrix<f64>,
}

impl CodingModel {
    pub fn new(anchors: DMatrix<f64>, mu: f64, variant: Variant) -> Result<Self> {
        let n = anchors.ncols();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 anchors, got {n}")));
        }
        if anchors.nrows() == 0 {
            return Err(Error::InvalidArgument("anchors have dimension 0".into()));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be finite and >= 0, got {mu}")));
        }
        if anchors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("anchors"));
        }
        for j in 0..n {
            for h in (j + 1)..n {
                if (anchors.column(j) - anchors.column(h)).amax() <= 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "anchors {j} and {h} are identical"
                    )));
                }
            }
        }
        let gram = anchors.transpose() * &anchors;
        Ok(Self {
            anchors,
            mu,
            variant,
            gram,
        })
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn anchor(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.anchors.as_slice()[j * d..(j + 1) * d]
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    /// Descriptor dimension `d`.
    pub fn dim(&self) -> usize {
        self.anchors.nrows()
    }

    /// Number of anchors `n`.
    pub fn n_anchors(&self) -> usize {
        self.anchors.ncols()
    }

    /// `C^T C`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Dispatches to the coder matching the model's variant.
    pub fn code(&self, x: &[f64], params: &SolverParams) -> Result<Coefficients> {
        match self.variant {
            Variant::FAemb => faemb_gamma(x, self, params).map(|(c, _)| c),
            Variant::FFAemb => ffaemb_gamma(x, self),
        }
    }
}

/// Coefficient vector `γ(x)` with `Σ_j γ_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    gamma: Vec<f64>,
}

impl Coefficients {
    /// Wraps `gamma` after checking the affine constraint within `tol`.
    pub fn new(gamma: Vec<f64>, tol: f64) -> Result<Self> {
        let sum: f64 = gamma.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > tol {
            return Err(Error::Infeasible { sum });
        }
        Ok(Self { gamma })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            gamma: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, j: usize) -> Self {
        let mut gamma = vec![0.0; n];
        gamma[j] = 1.0;
        Self { gamma }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Budgets and tolerances for offline learning and the Newton coder.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Maximum outer (alternation) iterations `T`.
    pub max_outer_iters: usize,
    /// Outer stopping threshold on `|Q(t) - Q(t-1)|`.
    pub outer_tol: f64,
    /// Newton stopping threshold on `δ²/2`.
    pub newton_tol: f64,
    /// Damped Newton step size.
    pub newton_step: f64,
    pub newton_max_iters: usize,
    /// Target for the KKT residual after the decrement criterion is met.
    pub stationarity_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_outer_iters: 20,
            outer_tol: 1e-6,
            newton_tol: 1e-6,
            newton_step: 0.1,
            newton_max_iters: 500,
            stationarity_tol: 1e-10,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.outer_tol > 0.0) {
            bad.push("outer_tol must be > 0");
        }
        if !(self.newton_tol > 0.0) {
            bad.push("newton_tol must be > 0");
        }
        if !(self.newton_step > 0.0 && self.newton_step <= 1.0) {
            bad.push("newton_step must be in (0, 1]");
        }
        if self.newton_max_iters == 0 {
            bad.push("newton_max_iters must be > 0");
        }
        if !(self.stationarity_tol > 0.0) {
            bad.push("stationarity_tol must be > 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(bad.join("; ")))
        }
    }
}

/// Stacks descriptor sets column-wise into a `d x m` matrix.
pub fn descriptor_matrix(sets: &[DescriptorSet]) -> Result<DMatrix<f64>> {
    let dim = sets
        .first()
        .map(DescriptorSet::dim)
        .ok_or_else(|| Error::InvalidArgument("no descriptor sets".into()))?;
    let mut data = Vec::new();
    for s in sets {
        check_dim(dim, s.dim())?;
        data.extend_from_slice(s.as_slice());
    }
    let m = data.len() / dim;
    Ok(DMatrix::from_vec(dim, m, data))
}
