//! Recall@K and NDCG@K with binary relevance, macro-averaged over users.
//!
//! Conventions: recall divides by the full relevant-set size; NDCG uses gain
//! `1 / log2(rank + 1)` and an ideal DCG over `min(k, |relevant|)` positions;
//! users without held-out items are excluded from both averages.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interactions::InteractionMatrix;
use crate::recommend::RankedList;

pub const METRIC_CONVENTIONS: &str = "recall = hits@k / |relevant|; ndcg = binary-gain DCG@k / IDCG over min(k, |relevant|) positions, log2(rank+1) discount; macro average over users with non-empty held-out sets";

fn check_relevant(relevant: &[u32]) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::Parameter(
            "relevant set is empty; exclude the user upstream".into(),
        ));
    }
    Ok(())
}

/// `relevant` must be sorted.
pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// `relevant` must be sorted.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(p, _)| discount(p + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// `1 / log2(rank + 1)` for 1-based `rank`.
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub parse: f64,
    pub graph: f64,
    pub filter: f64,
    pub score: f64,
    pub rank: f64,
    pub metric: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.parse + self.graph + self.filter + self.score + self.rank + self.metric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub conventions: &'static str,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub n_evaluated_users: usize,
    pub stage_timings: StageTimings,
}

#[derive(Serialize)]
struct MetricsOnly<'a> {
    schema_version: u32,
    conventions: &'a str,
    k: usize,
    recall: f64,
    ndcg: f64,
    n_evaluated_users: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report without timings; byte-identical across reruns.
    pub fn metrics_json(&self) -> String {
        let m = MetricsOnly {
            schema_version: self.schema_version,
            conventions: self.conventions,
            k: self.k,
            recall: self.recall,
            ndcg: self.ndcg,
            n_evaluated_users: self.n_evaluated_users,
        };
        serde_json::to_string_pretty(&m).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.conventions);
        let _ = writeln!(out, "{:<18} {:>12}", "metric", "value");
        let _ = writeln!(
            out,
            "{:<18} {:>12.6}",
            format!("recall@{}", self.k),
            self.recall
        );
        let _ = writeln!(
            out,
            "{:<18} {:>12.6}",
            format!("ndcg@{}", self.k),
            self.ndcg
        );
        let _ = writeln!(
            out,
            "{:<18} {:>12}",
            "evaluated_users", self.n_evaluated_users
        );
        let t = &self.stage_timings;
        for (name, secs) in [
            ("parse_s", t.parse),
            ("graph_s", t.graph),
            ("filter_s", t.filter),
            ("score_s", t.score),
            ("rank_s", t.rank),
            ("metric_s", t.metric),
        ] {
            let _ = writeln!(out, "{name:<18} {secs:>12.4}");
        }
        out
    }
}

/// Compensated (Neumaier) sum in slice order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Macro-averaged metrics of `ranked_lists` against `heldout`. Users missing
/// from `ranked_lists` count as empty rankings.
pub fn evaluate(
    ranked_lists: &[RankedList],
    heldout: &InteractionMatrix,
    k: usize,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let mut by_user: Vec<Option<&RankedList>> = vec![None; heldout.n_users()];
    for list in ranked_lists {
        if let Some(slot) = by_user.get_mut(list.user as usize) {
            *slot = Some(list);
        }
    }
    let per_user: Vec<(f64, f64)> = (0..heldout.n_users())
        .into_par_iter()
        .filter(|&u| !heldout.row(u).is_empty())
        .map(|u| {
            let relevant = heldout.row(u);
            let ranked = by_user[u].map(|l| l.items.as_slice()).unwrap_or(&[]);
            (
                recall_at_k(ranked, relevant, k).expect("non-empty"),
                ndcg_at_k(ranked, relevant, k).expect("non-empty"),
            )
        })
        .collect();
    if per_user.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = per_user.len() as f64;
    let recalls: Vec<f64> = per_user.iter().map(|p| p.0).collect();
    let ndcgs: Vec<f64> = per_user.iter().map(|p| p.1).collect();
    Ok(EvalReport {
        schema_version: crate::SCHEMA_VERSION,
        conventions: METRIC_CONVENTIONS,
        k,
        recall: compensated_sum(&recalls) / n,
        ndcg: compensated_sum(&ndcgs) / n,
        n_evaluated_users: per_user.len(),
        stage_timings: StageTimings::default(),
    })
}
