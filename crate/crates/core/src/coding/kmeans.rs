use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITERS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.column_iter().enumerate() {
        let dist = sq_dist(x, c.as_slice());
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations on the columns of `x` (`d x m`).
///
/// Returns the `d x n` centroid matrix. A cluster left empty is re-seeded to the
/// point lying farthest from its own centroid.
pub fn kmeans_init(x: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let (d, m) = x.shape();
    if n == 0 || m < n {
        return Err(Error::InvalidArgument(format!(
            "k-means needs at least n = {n} points, got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let col = |i: usize| x.column(i);

    let mut centroids = DMatrix::zeros(d, n);
    let first = rng.random_range(0..m);
    centroids.set_column(0, &col(first));
    let mut dist: Vec<f64> = (0..m).map(|i| sq_dist(col(i).as_slice(), col(first).as_slice())).collect();
    for j in 1..n {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against landing on a zero-weight tail entry through roundoff
            if dist[pick] == 0.0 {
                pick = dist.iter().enumerate().fold(0, |b, (i, &w)| if w > dist[b] { i } else { b });
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centroids.set_column(j, &col(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(col(i).as_slice(), col(pick).as_slice()));
        }
    }

    let mut assign = vec![usize::MAX; m];
    for _ in 0..KMEANS_MAX_ITERS {
        let fresh: Vec<(usize, f64)> = (0..m)
            .into_par_iter()
            .map(|i| nearest(col(i).as_slice(), &centroids))
            .collect();
        let changed = fresh.iter().zip(&assign).any(|(f, a)| f.0 != *a);
        for (a, f) in assign.iter_mut().zip(&fresh) {
            *a = f.0;
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(d, n);
        let mut counts = vec![0usize; n];
        for (i, &a) in assign.iter().enumerate() {
            let mut s = sums.column_mut(a);
            s += col(i);
            counts[a] += 1;
        }
        let mut taken = vec![false; m];
        for j in 0..n {
            if counts[j] > 0 {
                centroids.set_column(j, &(sums.column(j) / counts[j] as f64));
            } else {
                let far = (0..m)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| fresh[a].1.total_cmp(&fresh[b].1).then(b.cmp(&a)))
                    .expect("m >= n leaves an untaken point");
                taken[far] = true;
                centroids.set_column(j, &col(far));
            }
        }
    }
    Ok(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn distinct_points_become_centroids() {
        let x = DMatrix::from_row_slice(2, 4, &[0.0, 5.0, 0.0, 5.0, 0.0, 0.0, 5.0, 5.0]);
        let c = kmeans_init(&x, 4, 9).unwrap();
        let mut got: Vec<(i64, i64)> = c
            .column_iter()
            .map(|v| (v[0].round() as i64, v[1].round() as i64))
            .collect();
        got.sort();
        assert_eq!(got, vec![(0, 0), (0, 5), (5, 0), (5, 5)]);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let means = [[0.0, 0.0, 0.0], [1.0, -1.0, 2.0]];
        let m = 200;
        let x = DMatrix::from_fn(3, m, |k, i| means[i % 2][k] + noise.sample(&mut rng));
        let c = kmeans_init(&x, 2, 42).unwrap();
        for mean in means {
            let best = c
                .column_iter()
                .map(|v| (0..3).map(|k| (v[k] - mean[k]).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(4, 300, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(kmeans_init(&x, 5, 7).unwrap(), kmeans_init(&x, 5, 7).unwrap());
    }

    #[test]
    fn too_few_points() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(kmeans_init(&x, 3, 0).is_err());
    }
}
