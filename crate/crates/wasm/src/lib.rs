//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations are exported: a filter's frequency response against the
//! ideal step, a heatmap of the similarity graph for a small planted-cluster
//! dataset, and a full recommend-and-evaluate run on that dataset.

use serde_json::json;
use wasm_bindgen::prelude::*;

use polyfilter::filters::{frequency_response, uniform_grid, FilterKind, FilterSpec};
use polyfilter::graph::{build_similarity_graph, GraphConfig};
use polyfilter::interactions::{split_holdout, SplitSpec};
use polyfilter::metrics::evaluate;
use polyfilter::pipeline::{run_with_graph, FilterRequest, PipelineConfig};
use polyfilter::recommend::random_rankings;
use polyfilter::synthetic::{cluster_of, planted_clusters, SyntheticConfig};

const DEMO_USERS: usize = 400;
const DEMO_ITEMS: usize = 240;
const DEMO_CLUSTERS: usize = 8;

fn demo_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n_users: DEMO_USERS,
        n_items: DEMO_ITEMS,
        density: 0.05,
        n_clusters: DEMO_CLUSTERS,
        in_cluster: 0.75,
        seed,
    }
}

fn filter_from(kind: &str, tau: f64, beta: f64, coeffs: &str) -> Result<FilterSpec, String> {
    let kind: FilterKind = kind.parse().map_err(|e: polyfilter::Error| e.to_string())?;
    let spec = match kind {
        FilterKind::Custom => {
            let c = polyfilter::kv::parse_list(coeffs).map_err(|e| e.to_string())?;
            FilterSpec::custom(c)
        }
        k => polyfilter::filters::predefined_filter(k, tau, beta),
    };
    spec.map_err(|e| e.to_string())
}

/// JSON `{lambdas, gains, ideal, coeffs, effective, rms}` on a 201-point grid.
pub fn response_json(kind: &str, tau: f64, beta: f64, coeffs: &str) -> Result<String, String> {
    let filter = filter_from(kind, tau, beta, coeffs)?;
    let grid = uniform_grid(0.0, 1.0, 201);
    let curve = frequency_response(&filter, &grid).map_err(|e| e.to_string())?;
    let ideal: Vec<f64> = grid
        .iter()
        .map(|&l| if l <= tau { 1.0 } else { 0.0 })
        .collect();
    Ok(json!({
        "lambdas": curve.lambdas,
        "gains": curve.gains,
        "ideal": ideal,
        "coeffs": filter.coeffs,
        "effective": filter.effective_coeffs(),
        "rms": filter.fit_rms,
    })
    .to_string())
}

/// Row-major similarity matrix of the demo dataset, `DEMO_ITEMS`² entries.
pub fn heatmap_values(alpha: f64, s: f64, seed: u64) -> Result<Vec<f64>, String> {
    let data = planted_clusters(&demo_config(seed)).map_err(|e| e.to_string())?;
    let graph = build_similarity_graph(
        &data,
        &GraphConfig {
            alpha,
            s,
            ..GraphConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(graph.to_dense().into_raw_vec_and_offset().0)
}

/// JSON `{recall, ndcg, random_recall, users, items, interactions, samples}`.
pub fn recommend_json(
    alpha: f64,
    s: f64,
    kind: &str,
    tau: f64,
    beta: f64,
    coeffs: &str,
    seed: u64,
) -> Result<String, String> {
    let filter = filter_from(kind, tau, beta, coeffs)?;
    let data = planted_clusters(&demo_config(seed)).map_err(|e| e.to_string())?;
    let split = split_holdout(
        &data,
        &SplitSpec {
            seed,
            ..SplitSpec::default()
        },
    );
    let cfg = PipelineConfig {
        graph: GraphConfig {
            alpha,
            s,
            ..GraphConfig::default()
        },
        filter: FilterRequest::Spec(filter),
        k: 20,
        batch_size: 128,
        ..PipelineConfig::default()
    };
    let graph = build_similarity_graph(&split.train, &cfg.graph).map_err(|e| e.to_string())?;
    let out = run_with_graph(&split.train, &split.test, &graph, &cfg).map_err(|e| e.to_string())?;
    let random = evaluate(
        &random_rankings(&split.train, cfg.k, seed),
        &split.test,
        cfg.k,
    )
    .map_err(|e| e.to_string())?;
    let samples: Vec<_> = out
        .rankings
        .iter()
        .take(5)
        .map(|l| {
            let clusters = |items: &[u32]| {
                items
                    .iter()
                    .map(|&i| cluster_of(i as usize, DEMO_ITEMS, DEMO_CLUSTERS))
                    .collect::<Vec<_>>()
            };
            json!({
                "user": l.user,
                "cluster_of_history": clusters(split.train.row(l.user as usize)),
                "top": l.items.iter().take(8).collect::<Vec<_>>(),
                "top_clusters": clusters(&l.items[..l.items.len().min(8)]),
            })
        })
        .collect();
    Ok(json!({
        "recall": out.report.recall,
        "ndcg": out.report.ndcg,
        "random_recall": random.recall,
        "users": split.train.n_users(),
        "items": split.train.n_items(),
        "interactions": data.n_interactions(),
        "samples": samples,
    })
    .to_string())
}

#[wasm_bindgen(js_name = filterResponse)]
pub fn filter_response(kind: &str, tau: f64, beta: f64, coeffs: &str) -> Result<String, JsError> {
    response_json(kind, tau, beta, coeffs).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = similarityHeatmap)]
pub fn similarity_heatmap(alpha: f64, s: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    heatmap_values(alpha, s, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = heatmapSize)]
pub fn heatmap_size() -> usize {
    DEMO_ITEMS
}

#[wasm_bindgen(js_name = recommendDemo)]
pub fn recommend_demo(
    alpha: f64,
    s: f64,
    kind: &str,
    tau: f64,
    beta: f64,
    coeffs: &str,
    seed: u32,
) -> Result<String, JsError> {
    recommend_json(alpha, s, kind, tau, beta, coeffs, seed as u64).map_err(|e| JsError::new(&e))
}
