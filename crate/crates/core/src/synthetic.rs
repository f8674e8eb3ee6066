//! Planted-cluster implicit-feedback generator for tests, benches and demos.
//!
//! Items are split into contiguous clusters; each user has a home cluster
//! and draws each interaction from it with probability `in_cluster`,
//! otherwise uniformly from the whole catalog.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interactions::{IdMap, InteractionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Target fraction of the user x item grid that is observed.
    pub density: f64,
    pub n_clusters: usize,
    pub in_cluster: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_items: 3000,
            density: 0.005,
            n_clusters: 30,
            in_cluster: 0.8,
            seed: 7,
        }
    }
}

pub fn cluster_of(item: usize, n_items: usize, n_clusters: usize) -> usize {
    item * n_clusters / n_items
}

pub fn planted_clusters(cfg: &SyntheticConfig) -> Result<InteractionMatrix> {
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_clusters == 0 || cfg.n_clusters > cfg.n_items {
        return Err(Error::Parameter(format!(
            "degenerate synthetic config: {cfg:?}"
        )));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) || !(0.0..=1.0).contains(&cfg.in_cluster) {
        return Err(Error::Parameter(
            "density must lie in (0, 1], in_cluster in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mean = cfg.density * cfg.n_items as f64;
    let lo = ((mean * 0.5).round() as usize).max(1);
    let hi = ((mean * 1.5).round() as usize).clamp(lo, cfg.n_items);
    let mut rows = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let home = rng.random_range(0..cfg.n_clusters);
        let first = (home * cfg.n_items).div_ceil(cfg.n_clusters);
        let last = ((home + 1) * cfg.n_items).div_ceil(cfg.n_clusters);
        let room = if cfg.in_cluster == 1.0 {
            last - first
        } else {
            cfg.n_items
        };
        let degree = rng.random_range(lo..=hi).min(room);
        let mut row: Vec<u32> = Vec::with_capacity(degree);
        while row.len() < degree {
            let item = if rng.random::<f64>() < cfg.in_cluster {
                rng.random_range(first..last)
            } else {
                rng.random_range(0..cfg.n_items)
            } as u32;
            if !row.contains(&item) {
                row.push(item);
            }
        }
        rows.push(row);
    }
    InteractionMatrix::from_rows(
        rows,
        IdMap::sequential(cfg.n_users),
        IdMap::sequential(cfg.n_items),
    )
}
