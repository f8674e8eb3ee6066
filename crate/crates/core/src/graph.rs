//! Item-item similarity graph construction.
//!
//! `R~ = D_U^{-alpha} R D_I^{alpha-1}`, `P~ = R~^T R~`, `P = P~ .^ s`.
//! The graph is held as dense row blocks; a single block is the dense mode.

mod cache;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interactions::InteractionMatrix;

/// 2 GiB; the largest single allocation a graph build may request.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    Dense,
    /// Row partition into blocks of `block_rows` rows.
    Blocked {
        block_rows: usize,
    },
}

impl Storage {
    fn block_rows(self, n: usize) -> usize {
        match self {
            Storage::Dense => n.max(1),
            Storage::Blocked { block_rows } => block_rows.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub alpha: f64,
    pub s: f64,
    pub storage: Storage,
    /// Upper bound in bytes for one contiguous block.
    pub memory_budget: u64,
    /// Drop entries below this value after the Hadamard power. Off by default.
    pub sparsify_below: Option<f64>,
    /// Divide by a power-iteration estimate of the spectral norm. Off by default.
    pub rescale: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            s: 1.0,
            storage: Storage::Dense,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            sparsify_below: None,
            rescale: false,
        }
    }
}

/// Square matrix split into consecutive row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlocks {
    n: usize,
    block_rows: usize,
    blocks: Vec<Array2<f64>>,
}

impl RowBlocks {
    pub fn from_dense(m: Array2<f64>, storage: Storage) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Shape(format!(
                "{}x{} matrix is not square",
                n,
                m.ncols()
            )));
        }
        let block_rows = storage.block_rows(n);
        if block_rows >= n {
            return Ok(Self {
                n,
                block_rows,
                blocks: vec![m],
            });
        }
        let blocks = (0..n)
            .step_by(block_rows)
            .map(|r0| m.slice(s![r0..(r0 + block_rows).min(n), ..]).to_owned())
            .collect();
        Ok(Self {
            n,
            block_rows,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    /// Blocks in row order; block `b` covers rows `b*block_rows ..`.
    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.blocks[i / self.block_rows].row(i % self.block_rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.blocks[i / self.block_rows][[i % self.block_rows, j]]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        if self.blocks.len() == 1 {
            return self.blocks[0].clone();
        }
        let views: Vec<ArrayView2<'_, f64>> = self.blocks.iter().map(|b| b.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).expect("blocks share column count")
    }

    fn map_inplace(&mut self, f: impl Fn(&mut f64) + Sync) {
        self.blocks.par_iter_mut().for_each(|b| b.map_inplace(&f));
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.n);
        for b in &self.blocks {
            y.extend(
                b.rows()
                    .into_iter()
                    .map(|row| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()),
            );
        }
        y
    }
}

/// Adjusted similarity graph with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub values: RowBlocks,
    pub alpha: f64,
    pub s: f64,
    pub storage: Storage,
    /// Divisor applied by spectral rescaling (1 when off).
    pub scale: f64,
}

impl SimilarityGraph {
    pub fn n_items(&self) -> usize {
        self.values.n()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.values.to_dense()
    }

    /// Largest `|P[i,j] - P[j,i]|` relative to `max(1, |P[i,j]|)`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n_items();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.values.get(i, j);
                let d = (a - self.values.get(j, i)).abs() / a.abs().max(1.0);
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Per-user and per-item interaction counts.
pub fn degree_vectors(r: &InteractionMatrix) -> (Vec<usize>, Vec<usize>) {
    let d_users = r.rows().map(<[u32]>::len).collect();
    let mut d_items = vec![0usize; r.n_items()];
    for row in r.rows() {
        for &i in row {
            d_items[i as usize] += 1;
        }
    }
    (d_users, d_items)
}

/// `R~` on the sparsity pattern of `R`, plus its column-major transpose.
#[derive(Debug, Clone)]
pub struct NormalizedRatings {
    pub alpha: f64,
    n_items: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl NormalizedRatings {
    pub fn n_users(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// `(item, value)` pairs of user `u`.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let range = self.indptr[u]..self.indptr[u + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_users(), self.n_items));
        for u in 0..self.n_users() {
            for (i, v) in self.row(u) {
                m[[u, i as usize]] = v;
            }
        }
        m
    }

    /// Column-major copy: for each item, `(user, value)` sorted by user.
    fn columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for u in 0..self.n_users() {
            for (i, v) in self.row(u) {
                cols[i as usize].push((u as u32, v));
            }
        }
        cols
    }
}

/// Scales each interaction by `d_U[u]^-alpha * d_I[i]^(alpha-1)`.
pub fn normalize_asymmetric(r: &InteractionMatrix, alpha: f64) -> Result<NormalizedRatings> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let (d_users, d_items) = degree_vectors(r);
    // every stored entry has degree >= 1 on both sides, so 0^x never occurs here
    let user_scale: Vec<f64> = d_users.iter().map(|&d| scale_factor(d, -alpha)).collect();
    let item_scale: Vec<f64> = d_items
        .iter()
        .map(|&d| scale_factor(d, alpha - 1.0))
        .collect();
    let mut indptr = Vec::with_capacity(r.n_users() + 1);
    let mut indices = Vec::with_capacity(r.n_interactions());
    let mut values = Vec::with_capacity(r.n_interactions());
    indptr.push(0);
    for (u, row) in r.rows().enumerate() {
        for &i in row {
            indices.push(i);
            values.push(user_scale[u] * item_scale[i as usize]);
        }
        indptr.push(indices.len());
    }
    Ok(NormalizedRatings {
        alpha,
        n_items: r.n_items(),
        indptr,
        indices,
        values,
    })
}

/// `d^exponent` with `0^x := 0` (pseudo-inverse convention).
fn scale_factor(d: usize, exponent: f64) -> f64 {
    if d == 0 {
        0.0
    } else {
        (d as f64).powf(exponent)
    }
}

/// Bytes needed for one block of `block_rows x n` doubles.
pub fn block_bytes(n: usize, storage: Storage) -> u64 {
    let rows = storage.block_rows(n).min(n) as u64;
    rows * n as u64 * std::mem::size_of::<f64>() as u64
}

/// Gram product `R~^T R~`, accumulated per row over users in ascending order.
/// Row `i` is `sum_u R~[u,i] * R~[u,:]`, so every entry is a fixed-order sum
/// independent of the block size and thread count, and `P[i,j] == P[j,i]`
/// bit for bit.
pub fn item_similarity(
    rt: &NormalizedRatings,
    storage: Storage,
    memory_budget: u64,
) -> Result<RowBlocks> {
    let n = rt.n_items();
    let needed = block_bytes(n, storage);
    if needed > memory_budget {
        let hint = match storage {
            Storage::Dense => "use blocked storage with fewer rows per block".to_string(),
            Storage::Blocked { .. } => "reduce block_rows".to_string(),
        };
        return Err(Error::Capacity(format!(
            "{n}x{n} similarity needs {needed} bytes per block, budget is {memory_budget}; {hint}"
        )));
    }
    let cols = rt.columns();
    let block_rows = storage.block_rows(n);
    let starts: Vec<usize> = (0..n.max(1)).step_by(block_rows).collect();
    let blocks = starts
        .par_iter()
        .map(|&r0| {
            let r1 = (r0 + block_rows).min(n);
            let mut block = Array2::<f64>::zeros((r1 - r0, n));
            for (i, col) in cols.iter().enumerate().take(r1).skip(r0) {
                let mut out = block.row_mut(i - r0);
                let out = out.as_slice_mut().expect("standard layout row");
                for &(u, v_ui) in col {
                    for (j, v_uj) in rt.row(u as usize) {
                        out[j as usize] += v_ui * v_uj;
                    }
                }
            }
            block
        })
        .collect();
    Ok(RowBlocks {
        n,
        block_rows,
        blocks,
    })
}

/// Entrywise `P[i,j]^s` with `0^s := 0`.
pub fn hadamard_power(
    mut p: RowBlocks,
    s: f64,
    alpha: f64,
    storage: Storage,
) -> Result<SimilarityGraph> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Parameter(format!(
            "Hadamard exponent must be positive, got {s}"
        )));
    }
    if let Some(bad) = p
        .blocks
        .iter()
        .flat_map(|b| b.iter())
        .find(|v| v.is_nan() || **v < 0.0)
    {
        return Err(Error::Domain(format!(
            "similarity entry {bad} is negative or NaN"
        )));
    }
    if s != 1.0 {
        p.map_inplace(|v| {
            if *v > 0.0 {
                *v = v.powf(s);
            }
        });
    }
    Ok(SimilarityGraph {
        values: p,
        alpha,
        s,
        storage,
        scale: 1.0,
    })
}

/// Power-iteration estimate of the largest eigenvalue magnitude.
pub fn spectral_norm_estimate(p: &RowBlocks, max_iter: usize, tol: f64) -> f64 {
    let n = p.n();
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let y = p.matvec(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / norm).collect();
        let converged = (norm - estimate).abs() <= tol * norm;
        estimate = norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Full construction from training interactions.
pub fn build_similarity_graph(
    train: &InteractionMatrix,
    config: &GraphConfig,
) -> Result<SimilarityGraph> {
    let rt = normalize_asymmetric(train, config.alpha)?;
    let p = item_similarity(&rt, config.storage, config.memory_budget)?;
    let mut graph = hadamard_power(p, config.s, config.alpha, config.storage)?;
    if let Some(eps) = config.sparsify_below {
        graph.values.map_inplace(|v| {
            if *v < eps {
                *v = 0.0;
            }
        });
    }
    if config.rescale {
        let norm = spectral_norm_estimate(&graph.values, 500, 1e-10);
        if norm > 0.0 {
            graph.values.map_inplace(|v| *v /= norm);
            graph.scale = norm;
        }
    }
    Ok(graph)
}
