//! End-to-end run: graph, filter, scores, rankings, metrics, with timings.

use crate::stopwatch::Stopwatch;

use crate::error::Result;
use crate::filters::{predefined_filter, FilterKind, FilterSpec};
use crate::graph::{build_similarity_graph, GraphConfig, SimilarityGraph};
use crate::interactions::InteractionMatrix;
use crate::metrics::{evaluate, EvalReport};
use crate::recommend::{recommend_all, RankedList, ScoringMode, DEFAULT_BATCH_SIZE, DEFAULT_K};

/// A filter either given outright or built (and fitted) during the run.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterRequest {
    Predefined {
        kind: FilterKind,
        tau: f64,
        beta: f64,
    },
    Spec(FilterSpec),
}

impl FilterRequest {
    pub fn build(&self) -> Result<FilterSpec> {
        match self {
            FilterRequest::Predefined { kind, tau, beta } => predefined_filter(*kind, *tau, *beta),
            FilterRequest::Spec(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub graph: GraphConfig,
    pub filter: FilterRequest,
    pub k: usize,
    pub batch_size: usize,
    pub mode: ScoringMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            graph: GraphConfig::default(),
            filter: FilterRequest::Spec(FilterSpec::linear()),
            k: DEFAULT_K,
            batch_size: DEFAULT_BATCH_SIZE,
            mode: ScoringMode::Horner,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub filter: FilterSpec,
    pub rankings: Vec<RankedList>,
    pub report: EvalReport,
}

pub fn run_pipeline(
    train: &InteractionMatrix,
    heldout: &InteractionMatrix,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let start = Stopwatch::start();
    let graph = build_similarity_graph(train, &cfg.graph)?;
    let graph_secs = start.secs();
    let mut out = run_with_graph(train, heldout, &graph, cfg)?;
    out.report.stage_timings.graph = graph_secs;
    Ok(out)
}

/// As [`run_pipeline`] with a prebuilt graph (graph time left at zero).
pub fn run_with_graph(
    train: &InteractionMatrix,
    heldout: &InteractionMatrix,
    graph: &SimilarityGraph,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let start = Stopwatch::start();
    let filter = cfg.filter.build()?;
    let filter_secs = start.secs();
    let (rankings, batch) = recommend_all(train, graph, &filter, cfg.k, cfg.batch_size, cfg.mode)?;
    let start = Stopwatch::start();
    let mut report = evaluate(&rankings, heldout, cfg.k)?;
    report.stage_timings.metric = start.secs();
    report.stage_timings.filter = filter_secs;
    report.stage_timings.score = batch.score_secs;
    report.stage_timings.rank = batch.rank_secs;
    Ok(PipelineOutput {
        filter,
        rankings,
        report,
    })
}
