//! Brute-force oracles and property checks across module boundaries.

use std::collections::BTreeSet;

use faemb_core::aggregate::{fit_whitening, ImageSignature, DEFAULT_EPS_REL};
use faemb_core::binary::{hamming_distance, BinaryCode};
use faemb_core::coding::{faemb_gamma, ffaemb_gamma, sample_objective};
use faemb_core::embed::{embed_faemb, EmbeddingConfig};
use faemb_core::retrieval::{average_precision, evaluate_map, Container, GroundTruth, Query, QueryTruth, RetrievalIndex};
use faemb_core::{CodingModel, Coefficients, SolverParams, Variant};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l1_cubed(x: &[f64], v: &[f64]) -> f64 {
    x.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>().powi(3)
}

/// Global minimizer of `½‖x − Cγ‖² + (μ/2) Σ |γ_j| a_j` over `1ᵀγ = 1`, by
/// solving the smooth problem on every support and sign pattern and keeping
/// the best sign-consistent solution.
fn enumerate_faemb(x: &[f64], c: &DMatrix<f64>, mu: f64) -> (Vec<f64>, f64) {
    let n = c.ncols();
    let a: Vec<f64> = (0..n).map(|j| l1_cubed(x, c.column(j).as_slice())).collect();
    let xv = DVector::from_column_slice(x);
    let objective = |g: &[f64]| {
        let r = &xv - c * DVector::from_column_slice(g);
        0.5 * r.norm_squared() + 0.5 * mu * g.iter().zip(&a).map(|(g, a)| g.abs() * a).sum::<f64>()
    };
    let mut best = (vec![], f64::INFINITY);
    for support in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|j| support >> j & 1 == 1).collect();
        let k = idx.len();
        for signs in 0u32..(1 << k) {
            let s: Vec<f64> = (0..k).map(|t| if signs >> t & 1 == 1 { -1.0 } else { 1.0 }).collect();
            // [G 1; 1ᵀ 0] [γ; ν] = [Cᵀx − (μ/2) s∘a; 1]
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            let mut rhs = DVector::zeros(k + 1);
            for (p, &i) in idx.iter().enumerate() {
                for (q, &j) in idx.iter().enumerate() {
                    kkt[(p, q)] = c.column(i).dot(&c.column(j));
                }
                kkt[(p, k)] = 1.0;
                kkt[(k, p)] = 1.0;
                rhs[p] = c.column(i).dot(&xv) - 0.5 * mu * s[p] * a[i];
            }
            rhs[k] = 1.0;
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let mut g = vec![0.0; n];
            for (p, &i) in idx.iter().enumerate() {
                g[i] = sol[p];
            }
            // the smooth model only equals the objective inside its orthant
            if idx.iter().zip(&s).any(|(&i, &si)| g[i] * si < -1e-12) {
                continue;
            }
            let q = objective(&g);
            if q < best.1 {
                best = (g, q);
            }
        }
    }
    best
}

#[test]
fn newton_coder_matches_sign_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let params = SolverParams::default();
    let mut worst = 0.0f64;
    for trial in 0..150 {
        let n = 2 + trial % 3;
        let d = n + 1 + trial % 3;
        let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu = [1e-3, 1e-2, 1e-1, 1.0][trial % 4];
        let model = CodingModel::new(c.clone(), mu, Variant::FAemb).unwrap();
        let (g, _) = faemb_gamma(&x, &model, &params).unwrap();
        let (oracle, q_oracle) = enumerate_faemb(&x, &c, mu);
        let q = sample_objective(&x, g.as_slice(), &model).unwrap();
        assert!(q <= q_oracle + 1e-10 * q_oracle.abs().max(1.0), "trial {trial}: {q} > {q_oracle}");
        let err = g.as_slice().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    assert!(worst < 1e-6, "largest coefficient error {worst:e}");
}

#[test]
fn closed_form_matches_elimination() {
    // γ = γ0 + Z t with Z spanning {1ᵀz = 0}; minimize the quadratic in t directly
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..100 {
        let n = 2 + trial % 5;
        let d = 1 + trial % 7;
        let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu = 1e-2;
        let model = CodingModel::new(c.clone(), mu, Variant::FFAemb).unwrap();
        let g = ffaemb_gamma(&x, &model).unwrap();
        let a: f64 = (0..n).map(|j| l1_cubed(&x, c.column(j).as_slice())).sum();
        let h = c.transpose() * &c + DMatrix::identity(n, n) * (mu * a);
        let b = c.transpose() * DVector::from_column_slice(&x);
        let g0 = DVector::from_element(n, 1.0 / n as f64);
        let z = DMatrix::from_fn(n, n - 1, |r, k| if r == k { 1.0 } else if r == n - 1 { -1.0 } else { 0.0 });
        let t = (z.transpose() * &h * &z).cholesky().unwrap().solve(&(z.transpose() * (&b - &h * &g0)));
        let oracle = g0 + z * t;
        for j in 0..n {
            assert!((g.as_slice()[j] - oracle[j]).abs() < 1e-8, "trial {trial}, coefficient {j}");
        }
    }
}

#[test]
fn whitened_training_data_is_white() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mix = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
    let raw = DMatrix::from_fn(6, 3000, |_, _| rng.random_range(-1.0..1.0));
    let x = mix * raw;
    let w = fit_whitening(&x, 2, DEFAULT_EPS_REL).unwrap();
    let y = w.whiten_columns(&x).unwrap();
    let mean = y.column_mean();
    assert!(mean.amax() < 1e-10);
    let cov = &y * y.transpose() / (x.ncols() - 1) as f64;
    assert!((cov - DMatrix::identity(4, 4)).amax() < 1e-8);
}

fn ids(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("img{i:03}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_is_feasible(seed in 0u64..10_000, n in 2usize..8, d in 1usize..10, mu in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0));
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let model = CodingModel::new(c, mu.max(1e-6), Variant::FFAemb).unwrap();
        let g = ffaemb_gamma(&x, &model).unwrap();
        prop_assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn embedding_is_linear_in_coefficients(seed in 0u64..10_000, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (3, 4);
        let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        let model = CodingModel::new(c, 1e-2, Variant::FAemb).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut feasible = || {
            let mut g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s: f64 = g.iter().sum();
            g[0] += 1.0 - s;
            g
        };
        let (g1, g2) = (feasible(), feasible());
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let cfg = EmbeddingConfig { s1: 0.5, s2: 1.5 };
        let e = |g: &[f64]| embed_faemb(&x, &Coefficients::new(g.to_vec(), 1e-9).unwrap(), &model, &cfg).unwrap().values;
        let (e1, e2, em) = (e(&g1), e(&g2), e(&mix));
        for k in 0..em.len() {
            prop_assert!((em[k] - (t * e1[k] + (1.0 - t) * e2[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn hamming_is_a_metric(a in proptest::collection::vec(any::<bool>(), 1..200), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<bool> = a.iter().map(|_| rng.random()).collect();
        let c: Vec<bool> = a.iter().map(|_| rng.random()).collect();
        let (ca, cb, cc) = (BinaryCode::from_bits("a", &a), BinaryCode::from_bits("b", &b), BinaryCode::from_bits("c", &c));
        let naive = a.iter().zip(&b).filter(|(x, y)| x != y).count() as u32;
        prop_assert_eq!(hamming_distance(&ca, &cb).unwrap(), naive);
        prop_assert_eq!(hamming_distance(&cb, &ca).unwrap(), naive);
        prop_assert_eq!(hamming_distance(&ca, &ca).unwrap(), 0);
        prop_assert!(hamming_distance(&ca, &cc).unwrap() <= naive + hamming_distance(&cb, &cc).unwrap());
    }

    #[test]
    fn ap_ignores_junk_anywhere(rel in proptest::collection::vec(any::<bool>(), 5..40), at in proptest::collection::vec(0usize..50, 1..6)) {
        let names = ids(rel.len());
        let truth = QueryTruth {
            relevant: names.iter().zip(&rel).filter(|(_, r)| **r).map(|(n, _)| n.clone()).collect(),
            junk: BTreeSet::new(),
        };
        let ranked: Vec<&str> = names.iter().map(String::as_str).collect();
        let base = average_precision(&ranked, None, &truth);

        let junk: Vec<String> = (0..at.len()).map(|i| format!("junk{i}")).collect();
        let mut with = ranked.clone();
        for (j, pos) in junk.iter().zip(&at) {
            with.insert((*pos).min(with.len()), j.as_str());
        }
        let truth_j = QueryTruth { relevant: truth.relevant.clone(), junk: junk.iter().cloned().collect() };
        let other = average_precision(&with, None, &truth_j);
        prop_assert!((base.ap - other.ap).abs() < 1e-12);
        prop_assert!(base.ap >= 0.0 && base.ap <= 1.0);
    }

    #[test]
    fn map_ignores_insertion_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 24;
        let names = ids(k);
        let sigs: Vec<ImageSignature> = names
            .iter()
            .enumerate()
            .map(|(i, id)| ImageSignature {
                image_id: id.clone(),
                values: (0..5).map(|_| rng.random_range(-1.0..1.0) + (i % 4) as f64).collect(),
                degenerate: false,
            })
            .collect();
        let mut gt = GroundTruth::default();
        for (i, id) in names.iter().enumerate() {
            let relevant = names.iter().enumerate().filter(|(j, o)| j % 4 == i % 4 && *o != id).map(|(_, o)| o.clone()).collect();
            gt.insert(id.clone(), QueryTruth { relevant, junk: BTreeSet::new() }).unwrap();
        }
        let map_for = |order: &[usize]| {
            let shuffled: Vec<ImageSignature> = order.iter().map(|&i| sigs[i].clone()).collect();
            let index = RetrievalIndex::from_signatures(&shuffled).unwrap();
            let queries: Vec<(String, Query)> = sigs.iter().map(|s| (s.image_id.clone(), Query::Real(&s.values))).collect();
            evaluate_map(&queries, &index, &gt).unwrap().map
        };
        let forward: Vec<usize> = (0..k).collect();
        let mut perm = forward.clone();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        prop_assert!((map_for(&forward) - map_for(&perm)).abs() < 1e-12);
    }

    #[test]
    fn container_round_trips(data in proptest::collection::vec(any::<f64>(), 0..64), ints in proptest::collection::vec(any::<u64>(), 0..16), name in "[a-z]{1,12}") {
        let mut c = Container::new();
        c.put_f64(&name, &[data.len()], data.clone());
        c.put_u64("ints", ints.clone());
        c.put_str("label", "x");
        let bytes = c.encode();
        let back = Container::decode(&bytes).unwrap();
        let (shape, got) = back.f64(&name).unwrap();
        prop_assert_eq!(shape, &[data.len()][..]);
        prop_assert!(got.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.u64("ints").unwrap(), &ints[..]);
        prop_assert_eq!(back.encode(), bytes);
    }
}
