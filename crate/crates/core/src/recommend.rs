//! Filtered scoring `s_u = r_u (a_1 P + ... + a_K P^K)` and masked top-K.
//!
//! Scores are computed for batches of users by Horner's rule on row-vector
//! times matrix products; powers of `P` are never formed. The first product
//! exploits the sparsity of the interaction rows.

use std::cmp::Ordering;
use std::io::Write;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::graph::{RowBlocks, SimilarityGraph};
use crate::interactions::InteractionMatrix;

pub const DEFAULT_BATCH_SIZE: usize = 1024;
pub const DEFAULT_K: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub user: u32,
    pub scores: Vec<f64>,
}

/// Items ranked for one user, best first, with their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: u32,
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
}

/// Scores a batch of users; row `b` of the result belongs to `users[b]`.
pub fn score_batch(
    train: &InteractionMatrix,
    graph: &SimilarityGraph,
    coeffs: &[f64],
    users: &[u32],
) -> Result<Array2<f64>> {
    let n = graph.n_items();
    if train.n_items() != n {
        return Err(Error::Shape(format!(
            "train has {} items, graph has {n}",
            train.n_items()
        )));
    }
    if coeffs.is_empty() {
        return Err(Error::Parameter("filter has no coefficients".into()));
    }
    if let Some(&u) = users.iter().find(|&&u| u as usize >= train.n_users()) {
        return Err(Error::Shape(format!(
            "user {u} out of range ({} users)",
            train.n_users()
        )));
    }
    let p = &graph.values;
    let k = coeffs.len();

    // t = a_K r P, using the sparse rows of r
    let mut t = Array2::<f64>::zeros((users.len(), n));
    for (b, &u) in users.iter().enumerate() {
        let mut out = t.row_mut(b);
        for &i in train.row(u as usize) {
            out.scaled_add(coeffs[k - 1], &p.row(i as usize));
        }
    }
    // t <- (t + a_j r) P for j = K-1 .. 1
    let mut next = Array2::<f64>::zeros((users.len(), n));
    for &a in coeffs[..k - 1].iter().rev() {
        for (b, &u) in users.iter().enumerate() {
            for &i in train.row(u as usize) {
                t[[b, i as usize]] += a;
            }
        }
        dense_times(&t, p, &mut next);
        std::mem::swap(&mut t, &mut next);
    }
    Ok(t)
}

/// `out = t P`, summing block contributions in row-block order.
fn dense_times(t: &Array2<f64>, p: &RowBlocks, out: &mut Array2<f64>) {
    out.fill(0.0);
    let mut r0 = 0;
    for block in p.blocks() {
        let r1 = r0 + block.nrows();
        general_mat_mul(1.0, &t.slice(s![.., r0..r1]), block, 1.0, out);
        r0 = r1;
    }
}

pub fn score_users(
    train: &InteractionMatrix,
    graph: &SimilarityGraph,
    filter: &FilterSpec,
    users: &[u32],
) -> Result<Vec<ScoreVector>> {
    let scores = score_batch(train, graph, &filter.effective_coeffs(), users)?;
    Ok(users
        .iter()
        .zip(scores.rows())
        .map(|(&user, row)| ScoreVector {
            user,
            scores: row.to_vec(),
        })
        .collect())
}

/// Dense `sum_k a_k P^k`, for small catalogs and cross-checks only.
pub fn materialized_filter(
    graph: &SimilarityGraph,
    coeffs: &[f64],
    max_items: usize,
) -> Result<Array2<f64>> {
    let n = graph.n_items();
    if n > max_items {
        return Err(Error::Capacity(format!(
            "materializing a {n}x{n} filter exceeds the {max_items}-item limit; use Horner scoring"
        )));
    }
    let p = graph.to_dense();
    let mut power = p.clone();
    let mut acc = Array2::<f64>::zeros((n, n));
    for (idx, &a) in coeffs.iter().enumerate() {
        if idx > 0 {
            power = power.dot(&p);
        }
        acc.scaled_add(a, &power);
    }
    Ok(acc)
}

/// Descending score, then ascending item index.
fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .expect("scores checked finite")
        .then(a.1.cmp(&b.1))
}

/// Best `k` items not in `seen` (sorted). Shorter when fewer unseen items exist.
pub fn top_k(user: u32, scores: &[f64], seen: &[u32], k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Domain(format!(
            "user {user}: score of item {bad} is {}",
            scores[bad]
        )));
    }
    let mut seen = seen.iter().peekable();
    let mut candidates: Vec<(f64, u32)> = Vec::with_capacity(scores.len());
    for (i, &s) in scores.iter().enumerate() {
        let i = i as u32;
        while seen.peek().is_some_and(|&&x| x < i) {
            seen.next();
        }
        if seen.peek() == Some(&&i) {
            continue;
        }
        candidates.push((s, i));
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    Ok(RankedList {
        user,
        scores: candidates.iter().map(|c| c.0).collect(),
        items: candidates.into_iter().map(|c| c.1).collect(),
    })
}

/// How scores are produced for [`recommend_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringMode {
    Horner,
    /// Precomputed `sum a_k P^k`; capped at the given catalog size.
    Materialized {
        max_items: usize,
    },
}

/// Timing of the two per-batch stages, summed over batches.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchTimings {
    pub score_secs: f64,
    pub rank_secs: f64,
}

/// Ranked lists for every user, in user order. Batches run in parallel;
/// each user's scores depend only on its own row, so the output does not
/// depend on the thread count.
pub fn recommend_all(
    train: &InteractionMatrix,
    graph: &SimilarityGraph,
    filter: &FilterSpec,
    k: usize,
    batch_size: usize,
    mode: ScoringMode,
) -> Result<(Vec<RankedList>, BatchTimings)> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    let coeffs = filter.effective_coeffs();
    let dense_filter = match mode {
        ScoringMode::Horner => None,
        ScoringMode::Materialized { max_items } => {
            Some(materialized_filter(graph, &coeffs, max_items)?)
        }
    };
    let users: Vec<u32> = (0..train.n_users() as u32).collect();
    let per_batch: Vec<Result<(Vec<RankedList>, BatchTimings)>> = users
        .par_chunks(batch_size)
        .map(|batch| {
            let start = crate::stopwatch::Stopwatch::start();
            let scores = match &dense_filter {
                None => score_batch(train, graph, &coeffs, batch)?,
                Some(f) => {
                    let mut signal = Array2::<f64>::zeros((batch.len(), train.n_items()));
                    for (b, &u) in batch.iter().enumerate() {
                        for &i in train.row(u as usize) {
                            signal[[b, i as usize]] = 1.0;
                        }
                    }
                    signal.dot(f)
                }
            };
            let score_secs = start.secs();
            let start = crate::stopwatch::Stopwatch::start();
            let lists = batch
                .iter()
                .zip(scores.rows())
                .map(|(&u, row)| {
                    top_k(
                        u,
                        row.as_slice().expect("standard layout"),
                        train.row(u as usize),
                        k,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((
                lists,
                BatchTimings {
                    score_secs,
                    rank_secs: start.secs(),
                },
            ))
        })
        .collect();
    let mut lists = Vec::with_capacity(users.len());
    let mut timings = BatchTimings::default();
    for batch in per_batch {
        let (l, t) = batch?;
        lists.extend(l);
        timings.score_secs += t.score_secs;
        timings.rank_secs += t.rank_secs;
    }
    Ok((lists, timings))
}

/// Uniform-random recommender over unseen items, for baselines.
pub fn random_rankings(train: &InteractionMatrix, k: usize, seed: u64) -> Vec<RankedList> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = train.n_items();
    train
        .rows()
        .enumerate()
        .map(|(u, seen)| {
            let unseen: Vec<u32> = (0..n as u32)
                .filter(|i| seen.binary_search(i).is_err())
                .collect();
            let picks = sample(&mut rng, unseen.len(), k.min(unseen.len()));
            RankedList {
                user: u as u32,
                items: picks.iter().map(|j| unseen[j]).collect(),
                scores: vec![0.0; k.min(unseen.len())],
            }
        })
        .collect()
}

/// One line per user: `user<TAB>item:score,item:score,...` in rank order,
/// preceded by a schema comment.
pub fn write_recommendations<W: Write>(
    lists: &[RankedList],
    train: &InteractionMatrix,
    mut out: W,
) -> Result<()> {
    writeln!(out, "# schema_version={}", crate::SCHEMA_VERSION)?;
    for list in lists {
        write!(out, "{}\t", train.user_ids().external(list.user))?;
        for (n, (&item, score)) in list.items.iter().zip(&list.scores).enumerate() {
            if n > 0 {
                write!(out, ",")?;
            }
            write!(out, "{}:{}", train.item_ids().external(item), score)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
