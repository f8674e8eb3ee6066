//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use polyfilter::graph::{RowBlocks, SimilarityGraph, Storage};
use polyfilter::interactions::IdMap;
use polyfilter::InteractionMatrix;
use rand::Rng;

/// Random binary interaction matrix; every user and item index exists but
/// rows may be empty.
pub fn random_interactions<R: Rng>(
    rng: &mut R,
    n_users: usize,
    n_items: usize,
    density: f64,
) -> InteractionMatrix {
    let rows = (0..n_users)
        .map(|_| {
            (0..n_items as u32)
                .filter(|_| rng.random::<f64>() < density)
                .collect()
        })
        .collect();
    InteractionMatrix::from_rows(rows, IdMap::sequential(n_users), IdMap::sequential(n_items))
        .unwrap()
}

pub fn from_rows(rows: Vec<Vec<u32>>, n_items: usize) -> InteractionMatrix {
    let n_users = rows.len();
    InteractionMatrix::from_rows(rows, IdMap::sequential(n_users), IdMap::sequential(n_items))
        .unwrap()
}

/// Symmetric PSD matrix `B^T B`, scaled so its spectrum lies in [0, 1]
/// (by the largest absolute row sum), exactly symmetric.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize) -> Array2<f64> {
    let m = rng.random_range(1..=2 * n);
    let b = Array2::from_shape_fn((m, n), |_| {
        if rng.random::<f64>() < 0.5 {
            rng.random::<f64>()
        } else {
            0.0
        }
    });
    let g = b.t().dot(&b);
    let mut a = (&g + &g.t()) * 0.5;
    let bound = a
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if bound > 0.0 {
        a.mapv_inplace(|v| v / bound);
    }
    a
}

pub fn graph_from_dense(p: Array2<f64>, storage: Storage) -> SimilarityGraph {
    SimilarityGraph {
        values: RowBlocks::from_dense(p, storage).unwrap(),
        alpha: 0.5,
        s: 1.0,
        storage,
        scale: 1.0,
    }
}

/// Random coefficient list of order 1..=max_order with entries in [-3, 3].
pub fn random_coeffs<R: Rng>(rng: &mut R, max_order: usize) -> Vec<f64> {
    let order = rng.random_range(1..=max_order);
    (0..order).map(|_| rng.random_range(-3.0..3.0)).collect()
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
