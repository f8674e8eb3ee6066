//! Hyperparameter grid search selected on the validation split.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::graph::{build_similarity_graph, GraphConfig};
use crate::interactions::InteractionMatrix;
use crate::metrics::EvalReport;
use crate::pipeline::{run_with_graph, FilterRequest, PipelineConfig};

/// `(alpha, s, kind, beta)`; beta only for `ideal_approx`.
pub type GridPoint = (f64, f64, FilterKind, Option<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub ss: Vec<f64>,
    pub kinds: Vec<FilterKind>,
    /// Only used by `ideal_approx`; other kinds take a single point.
    pub betas: Vec<f64>,
    pub tau: f64,
}

impl SweepGrid {
    /// Grid points in evaluation order: alpha, then s, then kind, then beta.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.alphas.is_empty() || self.ss.is_empty() || self.kinds.is_empty() {
            return Err(Error::Parameter("sweep grid is empty".into()));
        }
        if self.kinds.contains(&FilterKind::Custom) {
            return Err(Error::Parameter("custom filters are not swept".into()));
        }
        if self.kinds.contains(&FilterKind::IdealApprox) && self.betas.is_empty() {
            return Err(Error::Parameter(
                "ideal_approx in the sweep needs at least one beta".into(),
            ));
        }
        let mut points = Vec::new();
        for &alpha in &self.alphas {
            for &s in &self.ss {
                for &kind in &self.kinds {
                    if kind == FilterKind::IdealApprox {
                        points.extend(self.betas.iter().map(|&b| (alpha, s, kind, Some(b))));
                    } else {
                        points.push((alpha, s, kind, None));
                    }
                }
            }
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub s: f64,
    pub kind: FilterKind,
    pub beta: Option<f64>,
    pub val_recall: f64,
    pub val_ndcg: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Index of the winner in `points`: highest validation recall, earliest on ties.
    pub best: usize,
    pub test_report: EvalReport,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# schema_version={}\nalpha,s,kind,beta,val_recall,val_ndcg,best\n",
            crate::SCHEMA_VERSION
        );
        for (n, p) in self.points.iter().enumerate() {
            let beta = p.beta.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.alpha,
                p.s,
                p.kind,
                beta,
                p.val_recall,
                p.val_ndcg,
                u8::from(n == self.best)
            );
        }
        out
    }
}

/// Evaluates every grid point on `val`, then the winner once on `test`.
/// One graph is built per `(alpha, s)` pair.
pub fn sweep(
    train: &InteractionMatrix,
    val: &InteractionMatrix,
    test: &InteractionMatrix,
    grid: &SweepGrid,
    base: &PipelineConfig,
) -> Result<SweepResult> {
    let points = grid.points()?;
    let mut results = Vec::with_capacity(points.len());
    let mut current: Option<((f64, f64), crate::graph::SimilarityGraph)> = None;
    for &(alpha, s, kind, beta) in &points {
        if current.as_ref().map(|(key, _)| *key) != Some((alpha, s)) {
            let cfg = GraphConfig {
                alpha,
                s,
                ..base.graph.clone()
            };
            current = Some(((alpha, s), build_similarity_graph(train, &cfg)?));
        }
        let graph = &current.as_ref().expect("graph built above").1;
        let cfg = PipelineConfig {
            filter: FilterRequest::Predefined {
                kind,
                tau: grid.tau,
                beta: beta.unwrap_or(0.0),
            },
            ..base.clone()
        };
        let out = run_with_graph(train, val, graph, &cfg)?;
        results.push(SweepPoint {
            alpha,
            s,
            kind,
            beta,
            val_recall: out.report.recall,
            val_ndcg: out.report.ndcg,
        });
    }
    let mut best = 0;
    for (n, p) in results.iter().enumerate() {
        if p.val_recall > results[best].val_recall {
            best = n;
        }
    }
    let w = &results[best];
    let cfg = PipelineConfig {
        graph: GraphConfig {
            alpha: w.alpha,
            s: w.s,
            ..base.graph.clone()
        },
        filter: FilterRequest::Predefined {
            kind: w.kind,
            tau: grid.tau,
            beta: w.beta.unwrap_or(0.0),
        },
        ..base.clone()
    };
    let test_report = crate::pipeline::run_pipeline(train, test, &cfg)?.report;
    Ok(SweepResult {
        points: results,
        best,
        test_report,
    })
}
