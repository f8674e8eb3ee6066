use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use polyfilter::filters::{
    frequency_response, uniform_grid, FilterKind, FilterSpec, DEFAULT_GRID_POINTS,
};
use polyfilter::graph::{
    build_similarity_graph, read_cache, write_cache, GraphConfig, SimilarityGraph, Storage,
};
use polyfilter::interactions::{
    dataset_stats, load_split, parse_interactions, sha256_hex, split_holdout, split_manifest,
    Format, Split, SplitSpec,
};
use polyfilter::kv::{parse_list, KvFile};
use polyfilter::metrics::StageTimings;
use polyfilter::pipeline::{run_with_graph, FilterRequest, PipelineConfig};
use polyfilter::recommend::{write_recommendations, ScoringMode, DEFAULT_BATCH_SIZE, DEFAULT_K};
use polyfilter::sweep::SweepGrid;
use polyfilter::synthetic::{planted_clusters, SyntheticConfig};
use polyfilter::InteractionMatrix;

use crate::settings::{CliError, Context};
use crate::{
    BenchArgs, DataArgs, EvalArgs, FilterArgs, GenerateArgs, GraphArgs, ResponseArgs, RunArgs,
    SweepArgs, SyntheticArgs,
};

const MATERIALIZE_MAX_ITEMS: usize = 4096;
const DEFAULT_TAU: f64 = 0.1;
const DEFAULT_BETA: f64 = 0.1;

type CliResult<T> = Result<T, CliError>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Core(e.into()))
}

fn format_of(ctx: &Context, args: &DataArgs, default: Format) -> CliResult<Format> {
    match ctx.value::<String>(args.format.clone(), "format")? {
        Some(f) => Ok(f.parse()?),
        None => Ok(default),
    }
}

fn split_spec(ctx: &Context, args: &DataArgs) -> CliResult<SplitSpec> {
    let d = SplitSpec::default();
    Ok(SplitSpec::new(
        ctx.value_or(args.train_frac, "train_frac", d.train_frac)?,
        ctx.value_or(args.test_frac, "test_frac", d.test_frac)?,
        ctx.value_or(args.val_frac, "val_frac", d.val_frac)?,
        ctx.seed,
    )?)
}

struct Loaded {
    split: Split,
    parse_secs: f64,
}

/// Either `--train/--test[/--val]` files or a `--data` file split in-process.
fn load_data(ctx: &Context, args: &DataArgs) -> CliResult<Loaded> {
    let start = Instant::now();
    let train = ctx.input(args.train.clone(), "train")?;
    let split = if let Some(train) = train {
        let test = ctx
            .input(args.test.clone(), "test")?
            .ok_or_else(|| CliError::Config("--train needs --test".into()))?;
        let val = ctx.input(args.val.clone(), "val")?;
        let format = format_of(ctx, args, Format::Triplet)?;
        let val_reader = val.as_deref().map(open).transpose()?;
        load_split(open(&train)?, open(&test)?, val_reader, format)?
    } else {
        let data = ctx
            .input(args.data.clone(), "data")?
            .ok_or_else(|| CliError::Config("give --data or --train/--test".into()))?;
        let format = format_of(ctx, args, Format::Adjacency)?;
        let spec = split_spec(ctx, args)?;
        let full = parse_interactions(open(&data)?, format)?;
        split_holdout(&full, &spec)
    };
    Ok(Loaded {
        split,
        parse_secs: start.elapsed().as_secs_f64(),
    })
}

fn graph_config(ctx: &Context, args: &GraphArgs) -> CliResult<GraphConfig> {
    let d = GraphConfig::default();
    let storage = match ctx
        .value_or(args.storage.clone(), "storage", "dense".to_string())?
        .as_str()
    {
        "dense" => Storage::Dense,
        "blocked" => Storage::Blocked {
            block_rows: ctx.value_or(args.block_rows, "block_rows", 1024)?,
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown storage `{other}` (dense, blocked)"
            )))
        }
    };
    let memory_budget = match ctx.value::<u64>(args.memory_budget_mb, "memory_budget_mb")? {
        Some(mb) => mb << 20,
        None => d.memory_budget,
    };
    Ok(GraphConfig {
        alpha: ctx.value_or(args.alpha, "alpha", d.alpha)?,
        s: ctx.value_or(args.s, "s", d.s)?,
        storage,
        memory_budget,
        sparsify_below: ctx.value(args.sparsify_below, "sparsify_below")?,
        rescale: ctx.switch(args.rescale, "rescale")?,
    })
}

fn filter_request(ctx: &Context, args: &FilterArgs) -> CliResult<FilterRequest> {
    if let Some(path) = ctx.input(args.filter_file.clone(), "filter_file")? {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let kv = KvFile::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(FilterRequest::Spec(FilterSpec::from_kv(&kv)?));
    }
    let kind: FilterKind = ctx
        .value_or(args.filter.clone(), "filter", "linear".to_string())?
        .parse()?;
    if kind == FilterKind::Custom {
        let coeffs = ctx
            .value::<String>(args.coeffs.clone(), "coeffs")?
            .ok_or_else(|| CliError::Config("custom filter needs --coeffs".into()))?;
        return Ok(FilterRequest::Spec(FilterSpec::custom(parse_list(
            &coeffs,
        )?)?));
    }
    Ok(FilterRequest::Predefined {
        kind,
        tau: ctx.value_or(args.tau, "tau", DEFAULT_TAU)?,
        beta: ctx.value_or(args.beta, "beta", DEFAULT_BETA)?,
    })
}

fn pipeline_config(
    ctx: &Context,
    graph: &GraphArgs,
    filter: FilterRequest,
    eval: &EvalArgs,
) -> CliResult<PipelineConfig> {
    let mode = if ctx.switch(eval.materialize, "materialize")? {
        ScoringMode::Materialized {
            max_items: MATERIALIZE_MAX_ITEMS,
        }
    } else {
        ScoringMode::Horner
    };
    Ok(PipelineConfig {
        graph: graph_config(ctx, graph)?,
        filter,
        k: ctx.value_or(eval.k, "k", DEFAULT_K)?,
        batch_size: ctx.value_or(eval.batch_size, "batch_size", DEFAULT_BATCH_SIZE)?,
        mode,
    })
}

/// Builds the graph, or loads it from `cache` when the parameters match.
fn graph_with_cache(
    train: &InteractionMatrix,
    cfg: &GraphConfig,
    cache: Option<&PathBuf>,
) -> CliResult<SimilarityGraph> {
    if let Some(path) = cache {
        if path.exists() {
            let cached = read_cache(open(path)?)?;
            let matches = cached.n_items() == train.n_items()
                && cached.alpha == cfg.alpha
                && cached.s == cfg.s
                && cached.storage == cfg.storage
                && (cached.scale != 1.0) == cfg.rescale;
            if matches && cfg.sparsify_below.is_none() {
                return Ok(cached);
            }
            eprintln!(
                "graph cache {} does not match this configuration; rebuilding",
                path.display()
            );
        }
    }
    let graph = build_similarity_graph(train, cfg)?;
    if let Some(path) = cache {
        let file = File::create(path).map_err(|e| CliError::Core(e.into()))?;
        write_cache(&graph, BufWriter::new(file))?;
    }
    Ok(graph)
}

pub fn split(ctx: &Context, args: &DataArgs) -> CliResult<()> {
    let data = ctx
        .input(args.data.clone(), "data")?
        .ok_or_else(|| CliError::Config("split needs --data".into()))?;
    let format = format_of(ctx, args, Format::Adjacency)?;
    let spec = split_spec(ctx, args)?;
    let bytes =
        fs::read(&data).map_err(|e| CliError::Config(format!("{}: {e}", data.display())))?;
    let full = parse_interactions(bytes.as_slice(), format)?;
    let parts = split_holdout(&full, &spec);
    let out = ctx.out_dir()?;
    let mut manifest = split_manifest(&spec, &sha256_hex(&bytes), &parts);
    for (name, m) in [
        ("train", &parts.train),
        ("test", &parts.test),
        ("val", &parts.val),
    ] {
        let body = m.to_bytes(Format::Triplet);
        manifest.set(&format!("{name}_sha256"), sha256_hex(&body));
        write_file(&out.join(format!("{name}.tsv")), body)?;
    }
    write_file(&out.join("split_manifest.txt"), manifest.to_text())?;
    println!(
        "train {} / test {} / val {} interactions written to {}",
        parts.train.n_interactions(),
        parts.test.n_interactions(),
        parts.val.n_interactions(),
        out.display()
    );
    Ok(())
}

pub fn run(ctx: &Context, args: &RunArgs) -> CliResult<()> {
    let loaded = load_data(ctx, &args.data)?;
    let cfg = pipeline_config(
        ctx,
        &args.graph,
        filter_request(ctx, &args.filter)?,
        &args.eval,
    )?;
    let cache = ctx.value(args.graph.graph_cache.clone(), "graph_cache")?;
    let train = &loaded.split.train;
    let start = Instant::now();
    let graph = graph_with_cache(train, &cfg.graph, cache.as_ref())?;
    let graph_secs = start.elapsed().as_secs_f64();
    let mut output = run_with_graph(train, &loaded.split.test, &graph, &cfg)?;
    output.report.stage_timings.parse = loaded.parse_secs;
    output.report.stage_timings.graph = graph_secs;

    let out = ctx.out_dir()?;
    write_file(&out.join("metrics.json"), output.report.metrics_json())?;
    write_file(&out.join("report.json"), output.report.to_json())?;
    let dump =
        File::create(out.join("recommendations.tsv")).map_err(|e| CliError::Core(e.into()))?;
    write_recommendations(&output.rankings, train, BufWriter::new(dump))?;
    write_file(&out.join("filter.txt"), output.filter.to_kv().to_text())?;
    print!("{}", output.report.to_table());
    Ok(())
}

fn list<T: std::str::FromStr>(
    ctx: &Context,
    flag: Option<String>,
    key: &str,
    default: &str,
) -> CliResult<Vec<T>> {
    Ok(parse_list(&ctx.value_or(
        flag,
        key,
        default.to_string(),
    )?)?)
}

pub fn sweep(ctx: &Context, args: &SweepArgs) -> CliResult<()> {
    let loaded = load_data(ctx, &args.data)?;
    let base = pipeline_config(
        ctx,
        &args.graph,
        FilterRequest::Spec(FilterSpec::linear()),
        &args.eval,
    )?;
    let grid = SweepGrid {
        alphas: list(
            ctx,
            args.alphas.clone(),
            "alphas",
            &base.graph.alpha.to_string(),
        )?,
        ss: list(ctx, args.ss.clone(), "ss", &base.graph.s.to_string())?,
        kinds: list::<String>(ctx, args.kinds.clone(), "kinds", "linear")?
            .iter()
            .map(|k| k.parse())
            .collect::<Result<_, _>>()?,
        betas: list(ctx, args.betas.clone(), "betas", &DEFAULT_BETA.to_string())?,
        tau: ctx.value_or(args.tau, "tau", DEFAULT_TAU)?,
    };
    let s = &loaded.split;
    let result = polyfilter::sweep::sweep(&s.train, &s.val, &s.test, &grid, &base)?;
    let out = ctx.out_dir()?;
    write_file(&out.join("sweep.csv"), result.to_csv())?;
    write_file(
        &out.join("sweep_test_metrics.json"),
        result.test_report.metrics_json(),
    )?;
    let best = &result.points[result.best];
    println!(
        "best on validation: alpha={} s={} filter={} beta={} (recall@{} {:.6}, ndcg {:.6})",
        best.alpha,
        best.s,
        best.kind,
        best.beta
            .map(|b| b.to_string())
            .unwrap_or_else(|| "-".into()),
        base.k,
        best.val_recall,
        best.val_ndcg
    );
    print!("{}", result.test_report.to_table());
    Ok(())
}

pub fn response(ctx: &Context, args: &ResponseArgs) -> CliResult<()> {
    let filter = filter_request(ctx, &args.filter)?.build()?;
    let points = ctx.value_or(args.points, "points", DEFAULT_GRID_POINTS)?;
    if points < 2 {
        return Err(CliError::Config("--points must be at least 2".into()));
    }
    let curve = frequency_response(&filter, &uniform_grid(0.0, 1.0, points))?;
    let out = ctx.out_dir()?;
    write_file(&out.join("response.csv"), curve.to_csv())?;
    write_file(&out.join("filter.txt"), filter.to_kv().to_text())?;
    println!(
        "filter {} coeffs {:?} effective {:?}",
        filter.kind,
        filter.coeffs,
        filter.effective_coeffs()
    );
    if let (Some(tau), Some(rms)) = (filter.tau, filter.fit_rms) {
        println!("fit of 1[lambda <= {tau}]: rms {rms:.6}");
    }
    Ok(())
}

#[derive(Serialize)]
struct StageStats {
    median: f64,
    min: f64,
    max: f64,
}

fn stage_stats(mut v: Vec<f64>) -> StageStats {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    StageStats {
        median,
        min: v[0],
        max: v[n - 1],
    }
}

fn cpu_model() -> String {
    fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into())
}

fn synthetic_config(
    ctx: &Context,
    args: &SyntheticArgs,
    defaults: SyntheticConfig,
) -> CliResult<SyntheticConfig> {
    Ok(SyntheticConfig {
        n_users: ctx.value_or(args.users, "users", defaults.n_users)?,
        n_items: ctx.value_or(args.items, "items", defaults.n_items)?,
        density: ctx.value_or(args.density, "density", defaults.density)?,
        n_clusters: ctx.value_or(args.clusters, "clusters", defaults.n_clusters)?,
        in_cluster: ctx.value_or(args.in_cluster, "in_cluster", defaults.in_cluster)?,
        seed: ctx.seed,
    })
}

pub fn bench(ctx: &Context, args: &BenchArgs) -> CliResult<()> {
    let repetitions = ctx.value_or(args.repetitions, "repetitions", 5usize)?;
    if repetitions < 3 {
        return Err(CliError::Config(format!(
            "--repetitions must be at least 3, got {repetitions}"
        )));
    }
    let cfg = pipeline_config(
        ctx,
        &args.graph,
        filter_request(ctx, &args.filter)?,
        &args.eval,
    )?;
    let uses_files = ctx
        .value::<PathBuf>(args.data.data.clone(), "data")?
        .is_some()
        || ctx
            .value::<PathBuf>(args.data.train.clone(), "train")?
            .is_some();
    let synthetic = if uses_files {
        None
    } else {
        let defaults = SyntheticConfig {
            n_users: 3000,
            n_items: 5000,
            ..SyntheticConfig::default()
        };
        let sc = synthetic_config(ctx, &args.synthetic, defaults)?;
        let full = planted_clusters(&sc)?;
        Some((sc, split_holdout(&full, &split_spec(ctx, &args.data)?)))
    };
    let mut runs: Vec<StageTimings> = Vec::with_capacity(repetitions);
    let mut last_report = None;
    // one extra warm-up run, discarded
    for rep in 0..=repetitions {
        let (split, parse_secs) = match &synthetic {
            Some((_, split)) => (split.clone(), 0.0),
            None => {
                let l = load_data(ctx, &args.data)?;
                (l.split, l.parse_secs)
            }
        };
        let mut out = polyfilter::pipeline::run_pipeline(&split.train, &split.test, &cfg)?;
        out.report.stage_timings.parse = parse_secs;
        if rep > 0 {
            runs.push(out.report.stage_timings);
        }
        last_report = Some(out.report);
    }
    let pick = |f: fn(&StageTimings) -> f64| stage_stats(runs.iter().map(f).collect());
    let report = last_report.expect("at least one run");
    let doc = json!({
        "schema_version": polyfilter::SCHEMA_VERSION,
        "machine": {
            "cpu_model": cpu_model(),
            "threads": rayon::current_num_threads(),
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
        },
        "dataset": match &synthetic {
            Some((sc, _)) => json!({"synthetic": {"users": sc.n_users, "items": sc.n_items, "density": sc.density, "clusters": sc.n_clusters, "seed": sc.seed}}),
            None => json!({"files": true}),
        },
        "config": {
            "alpha": cfg.graph.alpha,
            "s": cfg.graph.s,
            "filter": cfg.filter.build()?,
            "k": cfg.k,
            "batch_size": cfg.batch_size,
        },
        "repetitions": repetitions,
        "warmup_runs_excluded": 1,
        "stages_seconds": {
            "parse": pick(|t| t.parse),
            "graph": pick(|t| t.graph),
            "filter": pick(|t| t.filter),
            "score": pick(|t| t.score),
            "rank": pick(|t| t.rank),
            "metric": pick(|t| t.metric),
            "total": pick(StageTimings::total),
        },
        "recall": report.recall,
        "ndcg": report.ndcg,
    });
    let text = serde_json::to_string_pretty(&doc).expect("bench report serializes");
    write_file(&ctx.out_dir()?.join("bench.json"), &text)?;
    println!("{text}");
    Ok(())
}

pub fn generate(ctx: &Context, args: &GenerateArgs) -> CliResult<()> {
    let sc = synthetic_config(ctx, &args.synthetic, SyntheticConfig::default())?;
    let r = planted_clusters(&sc)?;
    let path = ctx.out_dir()?.join("synthetic.txt");
    write_file(&path, r.to_bytes(Format::Adjacency))?;
    let stats = dataset_stats(&r)?;
    println!(
        "{} users, {} items, {} interactions (density {:.5}) -> {}",
        stats.n_users,
        stats.n_items,
        stats.n_interactions,
        stats.density,
        path.display()
    );
    Ok(())
}

pub fn stats(ctx: &Context, args: &DataArgs) -> CliResult<()> {
    let data = ctx
        .input(args.data.clone(), "data")?
        .ok_or_else(|| CliError::Config("stats needs --data".into()))?;
    let format = format_of(ctx, args, Format::Adjacency)?;
    let r = parse_interactions(open(&data)?, format)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&dataset_stats(&r)?).expect("stats serialize")
    );
    Ok(())
}
