//! Training-free collaborative filtering with polynomial low-pass graph filters.
//!
//! The pipeline builds an item-item similarity graph from binary implicit
//! feedback, smooths each user's interaction row with a matrix polynomial
//! `a_1 P + a_2 P^2 + ... + a_K P^K` evaluated by Horner's rule (no
//! eigendecomposition, no materialized powers), and ranks unseen items.
//!
//! - [`interactions`]: dataset parsing, statistics, per-user holdout splits
//! - [`graph`]: asymmetric normalization, Gram product, Hadamard power, cache files
//! - [`filters`]: filter specs, frequency responses, least-squares LPF fitting
//! - [`recommend`]: batched Horner scoring and masked top-K
//! - [`metrics`]: Recall@K / NDCG@K and evaluation reports
//! - [`oracle`]: dense spectral reference used for verification only
//! - [`pipeline`], [`sweep`], [`synthetic`]: end-to-end drivers and test data

pub mod error;
pub mod filters;
pub mod graph;
pub mod interactions;
pub mod kv;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod recommend;
pub mod stopwatch;
pub mod sweep;
pub mod synthetic;

pub use error::{Error, Result};
pub use filters::{FilterKind, FilterSpec};
pub use graph::{GraphConfig, SimilarityGraph, Storage};
pub use interactions::{DatasetStats, Format, InteractionMatrix, SplitSpec};
pub use metrics::EvalReport;
pub use recommend::RankedList;

/// Version stamped into every emitted report, dump and manifest.
pub const SCHEMA_VERSION: u32 = 1;
