//! Symmetric flattening of second-order residual tensors and the
//! l1-distance terms shared by the coders and the bounds.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// Relative tolerance used when checking symmetry in [`sym_flatten`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Number of entries in the upper triangle (diagonal included) of a `d x d` matrix.
#[inline]
pub const fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Upper triangle of a symmetric `d x d` matrix, stored row-major (`i <= j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    pub fn new(dim: usize, upper: Vec<f64>) -> Result<Self> {
        check_dim(tri_len(dim), upper.len())?;
        Ok(Self { dim, upper })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let upper = sym_flatten(a)?;
        Ok(Self {
            dim: a.nrows(),
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn into_upper(self) -> Vec<f64> {
        self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.upper[tri_index(self.dim, i, j)]
    }

    /// Expands back to the full dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        sym_unflatten(self.dim, &self.upper)
    }
}

/// Offset of entry `(i, j)`, `i <= j`, in the row-major upper triangle.
#[inline]
pub fn tri_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < d);
    i * (2 * d - i + 1) / 2 + j - i
}

/// Flattens a symmetric matrix to its upper triangle, `i` outer and `j >= i` inner.
pub fn sym_flatten(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.ncols(),
        });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_dev = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_dev = max_dev.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_dev > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric {
            max_deviation: max_dev,
        });
    }
    let mut out = Vec::with_capacity(tri_len(d));
    for i in 0..d {
        for j in i..d {
            out.push(a[(i, j)]);
        }
    }
    Ok(out)
}

/// Inverse of [`sym_flatten`].
pub fn sym_unflatten(d: usize, upper: &[f64]) -> DMatrix<f64> {
    assert_eq!(upper.len(), tri_len(d), "triangle length does not match dimension");
    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            a[(i, j)] = upper[k];
            a[(j, i)] = upper[k];
            k += 1;
        }
    }
    a
}

/// Writes the flattened outer product `r r^T` scaled by `weight` into `out`.
#[inline]
pub fn outer_flatten_into(r: &[f64], weight: f64, out: &mut [f64]) {
    let d = r.len();
    debug_assert_eq!(out.len(), tri_len(d));
    let mut k = 0;
    for i in 0..d {
        let wi = weight * r[i];
        let row = &mut out[k..k + d - i];
        for (o, rj) in row.iter_mut().zip(&r[i..]) {
            *o = wi * rj;
        }
        k += d - i;
    }
}

/// `sym_flatten((x - v)(x - v)^T)`.
pub fn residual_tensor(x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), v.len())?;
    let r: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - b).collect();
    let mut out = vec![0.0; tri_len(r.len())];
    outer_flatten_into(&r, 1.0, &mut out);
    Ok(out)
}

/// `‖x - v‖₁³`.
#[inline]
pub fn l1_cubed(x: &[f64], v: &[f64]) -> f64 {
    let s: f64 = x.iter().zip(v).map(|(a, b)| (a - b).abs()).sum();
    s * s * s
}

/// The vector `a` with `a_j = ‖x - v_j‖₁³` for every anchor column `v_j` of `anchors`.
pub fn l1_dist_cubed(x: &[f64], anchors: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim(anchors.nrows(), x.len())?;
    Ok(anchors
        .column_iter()
        .map(|v| l1_cubed(x, v.as_slice()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flatten_small_cases() {
        let a = DMatrix::from_row_slice(1, 1, &[5.0]);
        assert_eq!(sym_flatten(&a).unwrap(), vec![5.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(sym_flatten(&a).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn flatten_outer_product_matches_triangle_walk() {
        let v = [1.0, 2.0, 3.0];
        let a = DMatrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        assert_eq!(
            sym_flatten(&a).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
        );
    }

    #[test]
    fn flatten_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 3.0]);
        match sym_flatten(&a) {
            Err(Error::NotSymmetric { max_deviation }) => {
                assert!((max_deviation - 0.5).abs() < 1e-15)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn residual_tensor_cases() {
        assert_eq!(residual_tensor(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), vec![0.0; 3]);
        assert_eq!(residual_tensor(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), vec![1.0, -1.0, 1.0]);
        assert_eq!(residual_tensor(&[3.0, 1.0], &[1.0, 1.0]).unwrap(), vec![4.0, 0.0, 0.0]);
        assert!(residual_tensor(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn l1_cubed_cases() {
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        assert_eq!(l1_dist_cubed(&[0.0], &c).unwrap(), vec![1.0, 8.0]);
        let c = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, -1.0, -1.0]);
        assert_eq!(l1_dist_cubed(&[0.5, -1.0], &c).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn l1_cubed_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let d = rng.random_range(1..12);
            let n = rng.random_range(2..9);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0));
            let got = l1_dist_cubed(&x, &c).unwrap();
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..d {
                    s += (x[k] - c[(k, j)]).abs();
                }
                assert!((got[j] - s * s * s).abs() <= 1e-12 * (1.0 + s * s * s));
            }
        }
    }

    #[test]
    fn tri_index_walks_in_order() {
        for d in 1..7 {
            let mut k = 0;
            for i in 0..d {
                for j in i..d {
                    assert_eq!(tri_index(d, i, j), k);
                    k += 1;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn unflatten_roundtrip(d in 1usize..8, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..tri_len(d)).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = sym_unflatten(d, &u);
            prop_assert_eq!(sym_flatten(&a).unwrap(), u.clone());
            let s = SymMatrix::new(d, u).unwrap();
            prop_assert_eq!(s.to_dense(), a);
        }

        #[test]
        fn rank_one_diagonal_nonnegative(r in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let zero = vec![0.0; r.len()];
            let t = residual_tensor(&r, &zero).unwrap();
            let s = SymMatrix::new(r.len(), t).unwrap();
            for i in 0..r.len() {
                prop_assert!(s.get(i, i) >= 0.0);
            }
        }

        #[test]
        fn l1_cubed_zero_iff_equal(x in proptest::collection::vec(-3.0f64..3.0, 1..6), k in 0usize..6) {
            let mut v = x.clone();
            prop_assert_eq!(l1_cubed(&x, &v), 0.0);
            let k = k % v.len();
            v[k] += 0.5;
            prop_assert!(l1_cubed(&x, &v) > 0.0);
        }
    }
}
