//! Per-descriptor embeddings.
//!
//! The FAemb map emits, for each anchor `v_j`, the block
//! `[s1 γ_j ; s2 γ_j (x - v_j) ; γ_j triu((x - v_j)(x - v_j)^T)]`. With the
//! default `s1 = s2 = 0` only the second-order block is kept, giving
//! `n d (d + 1) / 2` values. Off-diagonal triangle entries are copied as is.
//!
//! VLAD and VLAT are the hard-assignment special cases and are provided as
//! reference embeddings.

mod bound;

pub use bound::{bound_faemb, bound_ffaemb, taylor_approx_error, BoundInputs, TaylorOracle};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::coding::{CodingModel, Coefficients, SolverParams, FEASIBILITY_TOL};
use crate::descriptor::DescriptorSet;
use crate::error::{check_dim, Error, Result};
use crate::tensor::{outer_flatten_into, tri_len};

/// Scaling of the zeroth- and first-order blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmbeddingConfig {
    pub s1: f64,
    pub s2: f64,
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s1 >= 0.0 && self.s2 >= 0.0 && self.s1.is_finite() && self.s2.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("s1 and s2 must be finite and >= 0".into()))
        }
    }

    /// True when only the second-order blocks are emitted.
    pub fn is_compact(&self) -> bool {
        self.s1 == 0.0 && self.s2 == 0.0
    }

    /// Length of one per-anchor block.
    pub fn block_len(&self, d: usize) -> usize {
        if self.is_compact() {
            tri_len(d)
        } else {
            1 + d + tri_len(d)
        }
    }
}

/// Length of the embedded vector for `n` anchors in dimension `d`.
pub fn embedding_len(n: usize, d: usize, cfg: &EmbeddingConfig) -> usize {
    n * cfg.block_len(d)
}

/// An embedded descriptor together with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedVector {
    pub values: Vec<f64>,
    pub n_anchors: usize,
    pub dim: usize,
    pub config: EmbeddingConfig,
}

impl EmbeddedVector {
    pub fn block(&self, j: usize) -> &[f64] {
        let b = self.config.block_len(self.dim);
        &self.values[j * b..(j + 1) * b]
    }
}

/// Writes the FAemb embedding of `x` into `out` (length [`embedding_len`]).
pub fn embed_into(x: &[f64], gamma: &[f64], anchors: &DMatrix<f64>, cfg: &EmbeddingConfig, out: &mut [f64]) {
    let (d, n) = anchors.shape();
    let b = cfg.block_len(d);
    debug_assert_eq!(out.len(), n * b);
    let mut r = vec![0.0; d];
    let c = anchors.as_slice();
    for j in 0..n {
        let v = &c[j * d..(j + 1) * d];
        for k in 0..d {
            r[k] = x[k] - v[k];
        }
        let block = &mut out[j * b..(j + 1) * b];
        let g = gamma[j];
        if cfg.is_compact() {
            outer_flatten_into(&r, g, block);
        } else {
            block[0] = cfg.s1 * g;
            for k in 0..d {
                block[1 + k] = cfg.s2 * g * r[k];
            }
            outer_flatten_into(&r, g, &mut block[1 + d..]);
        }
    }
}

/// `φ(x)` for given coefficients.
pub fn embed_faemb(x: &[f64], gamma: &Coefficients, model: &CodingModel, cfg: &EmbeddingConfig) -> Result<EmbeddedVector> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.n_anchors(), gamma.len())?;
    cfg.validate()?;
    let sum: f64 = gamma.as_slice().iter().sum();
    if (sum - 1.0).abs() > FEASIBILITY_TOL {
        return Err(Error::Infeasible { sum });
    }
    let mut values = vec![0.0; embedding_len(model.n_anchors(), model.dim(), cfg)];
    embed_into(x, gamma.as_slice(), model.anchors(), cfg, &mut values);
    Ok(EmbeddedVector {
        values,
        n_anchors: model.n_anchors(),
        dim: model.dim(),
        config: *cfg,
    })
}

/// Index of the Euclidean-nearest anchor; ties go to the lowest index.
pub fn nearest_anchor(x: &[f64], anchors: &DMatrix<f64>) -> Result<usize> {
    check_dim(anchors.nrows(), x.len())?;
    let mut best = (0, f64::INFINITY);
    for (j, v) in anchors.column_iter().enumerate() {
        let dist: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best.1 {
            best = (j, dist);
        }
    }
    Ok(best.0)
}

/// VLAD: the residual to the nearest anchor placed in that anchor's block.
pub fn embed_vlad(x: &[f64], anchors: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (d, n) = anchors.shape();
    let j = nearest_anchor(x, anchors)?;
    let mut out = vec![0.0; n * d];
    for k in 0..d {
        out[j * d + k] = x[k] - anchors[(k, j)];
    }
    Ok(out)
}

/// VLAT: the flattened residual tensor to the nearest anchor in that anchor's block.
pub fn embed_vlat(x: &[f64], anchors: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (d, n) = anchors.shape();
    let j = nearest_anchor(x, anchors)?;
    let t = tri_len(d);
    let mut out = vec![0.0; n * t];
    let r: Vec<f64> = (0..d).map(|k| x[k] - anchors[(k, j)]).collect();
    outer_flatten_into(&r, 1.0, &mut out[j * t..(j + 1) * t]);
    Ok(out)
}

/// Codes and embeds every descriptor of `set`; column `i` is `φ(x_i)`.
pub fn embed_set(
    set: &DescriptorSet,
    model: &CodingModel,
    params: &SolverParams,
    cfg: &EmbeddingConfig,
) -> Result<DMatrix<f64>> {
    check_dim(model.dim(), set.dim())?;
    cfg.validate()?;
    let len = embedding_len(model.n_anchors(), model.dim(), cfg);
    let mut out = DMatrix::zeros(len, set.len());
    out.as_mut_slice()
        .par_chunks_mut(len)
        .zip(set.as_slice().par_chunks(set.dim()))
        .try_for_each(|(col, x)| -> Result<()> {
            let g = model.code(x, params)?;
            embed_into(x, g.as_slice(), model.anchors(), cfg, col);
            Ok(())
        })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::Variant;

    fn line_model() -> CodingModel {
        CodingModel::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), 1e-2, Variant::FFAemb).unwrap()
    }

    #[test]
    fn hand_example() {
        let e = embed_faemb(&[0.5], &Coefficients::uniform(2), &line_model(), &EmbeddingConfig::default()).unwrap();
        assert_eq!(e.values, vec![0.125, 0.125]);
    }

    #[test]
    fn one_hot_at_anchor_is_zero() {
        let c = DMatrix::from_row_slice(2, 2, &[0.2, 1.0, -0.4, 0.0]);
        let model = CodingModel::new(c, 0.0, Variant::FAemb).unwrap();
        let e = embed_faemb(&[0.2, -0.4], &Coefficients::one_hot(2, 0), &model, &EmbeddingConfig::default()).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn general_layout() {
        let cfg = EmbeddingConfig { s1: 2.0, s2: 3.0 };
        let e = embed_faemb(&[0.5], &Coefficients::uniform(2), &line_model(), &cfg).unwrap();
        assert_eq!(e.values.len(), 2 * (1 + 1 + 1));
        assert_eq!(e.block(0), &[1.0, 0.75, 0.125]);
        assert_eq!(e.block(1), &[1.0, -0.75, 0.125]);
    }

    #[test]
    fn vlad_vlat_cases() {
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(embed_vlad(&[0.4], &c).unwrap(), vec![0.4, 0.0]);
        assert_eq!(embed_vlad(&[0.5], &c).unwrap(), vec![0.5, 0.0]);
        assert_eq!(embed_vlad(&[0.0], &c).unwrap(), vec![0.0, 0.0]);
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 0.0, 5.0]);
        assert_eq!(embed_vlat(&[1.0, -1.0], &c).unwrap(), vec![1.0, -1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(embed_vlat(&[5.0, 5.0], &c).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn rejects_infeasible_gamma() {
        let g = Coefficients::new(vec![0.5, 0.5], 1e-9).unwrap();
        assert!(embed_faemb(&[0.5, 0.1], &g, &line_model(), &EmbeddingConfig::default()).is_err());
        let bad = EmbeddingConfig { s1: -1.0, s2: 0.0 };
        assert!(embed_faemb(&[0.5], &g, &line_model(), &bad).is_err());
    }
}
