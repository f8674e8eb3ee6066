use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polyfilter(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyfilter"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Small planted-cluster dataset written by `generate`.
fn dataset(dir: &Path) -> PathBuf {
    ok(&polyfilter(
        dir,
        &[
            "generate",
            "--users",
            "300",
            "--items",
            "200",
            "--density",
            "0.05",
            "--clusters",
            "5",
            "--out",
            "data",
        ],
    ));
    dir.join("data/synthetic.txt")
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn split_writes_a_partition_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let total: usize = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().count() - 1)
        .sum();
    ok(&polyfilter(
        dir.path(),
        &["split", "--data", data.to_str().unwrap(), "--out", "a"],
    ));
    ok(&polyfilter(
        dir.path(),
        &["split", "--data", data.to_str().unwrap(), "--out", "b"],
    ));
    let a = dir.path().join("a");
    assert_eq!(
        lines(&a.join("train.tsv")) + lines(&a.join("test.tsv")) + lines(&a.join("val.tsv")),
        total
    );
    let manifest = fs::read_to_string(a.join("split_manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 2024"));
    assert_eq!(
        manifest,
        fs::read_to_string(dir.path().join("b/split_manifest.txt")).unwrap()
    );
    ok(&polyfilter(
        dir.path(),
        &[
            "split",
            "--data",
            data.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            "c",
        ],
    ));
    assert_ne!(
        fs::read(a.join("test.tsv")).unwrap(),
        fs::read(dir.path().join("c/test.tsv")).unwrap()
    );
}

#[test]
fn bad_fractions_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let out = polyfilter(
        dir.path(),
        &[
            "split",
            "--data",
            data.to_str().unwrap(),
            "--train-frac",
            "0.5",
            "--test-frac",
            "0.5",
            "--val-frac",
            "0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sum to"));
}

#[test]
fn missing_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyfilter(dir.path(), &["run", "--data", "nope.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_test_split_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("train.tsv"), "u1\ti1\nu1\ti2\nu2\ti2\n").unwrap();
    fs::write(dir.path().join("test.tsv"), "").unwrap();
    let out = polyfilter(
        dir.path(),
        &["run", "--train", "train.tsv", "--test", "test.tsv"],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn dense_graph_over_budget_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let out = polyfilter(
        dir.path(),
        &[
            "run",
            "--data",
            data.to_str().unwrap(),
            "--memory-budget-mb",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blocked"));
}

#[test]
fn bench_needs_three_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyfilter(dir.path(), &["bench", "--repetitions", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn response_curve_has_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&polyfilter(
        dir.path(),
        &["response", "--filter", "ideal_approx", "--tau", "0.1"],
    ));
    assert!(stdout.contains("rms 0.155315"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("out/response.csv")).unwrap();
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("lambda"))
        .collect();
    assert_eq!(rows.len(), 1001);
    assert!(rows[0].starts_with("0,"));
    let custom = ok(&polyfilter(
        dir.path(),
        &[
            "response",
            "--filter",
            "custom",
            "--coeffs",
            "-29,10,-1",
            "--out",
            "c",
        ],
    ));
    assert!(custom.contains("[-29.0, 10.0, -1.0]"), "{custom}");
}

#[test]
fn zero_beta_blend_matches_linear_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    ok(&polyfilter(
        dir.path(),
        &["run", "--data", d, "--filter", "linear", "--out", "lin"],
    ));
    ok(&polyfilter(
        dir.path(),
        &[
            "run",
            "--data",
            d,
            "--filter",
            "ideal_approx",
            "--beta",
            "0",
            "--out",
            "ideal",
        ],
    ));
    let read = |p: &str| fs::read_to_string(dir.path().join(p)).unwrap();
    assert_eq!(read("lin/metrics.json"), read("ideal/metrics.json"));
    assert_eq!(
        read("lin/recommendations.tsv"),
        read("ideal/recommendations.tsv")
    );
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    for out in ["r1", "r2"] {
        ok(&polyfilter(
            dir.path(),
            &[
                "run",
                "--data",
                d,
                "--threads",
                "2",
                "--filter",
                "second_order",
                "--out",
                out,
            ],
        ));
    }
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("r1/metrics.json"), read("r2/metrics.json"));
    assert_eq!(
        read("r1/recommendations.tsv"),
        read("r2/recommendations.tsv")
    );
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    fs::write(
        dir.path().join("run.conf"),
        format!(
            "# experiment\ndata = {}\nk = 5\nfilter = second_order\nout = from_config\n",
            data.display()
        ),
    )
    .unwrap();
    ok(&polyfilter(dir.path(), &["run", "--config", "run.conf"]));
    let metrics = fs::read_to_string(dir.path().join("from_config/metrics.json")).unwrap();
    assert!(metrics.contains("\"k\": 5"), "{metrics}");
    assert!(
        fs::read_to_string(dir.path().join("from_config/filter.txt"))
            .unwrap()
            .contains("second_order")
    );
    ok(&polyfilter(
        dir.path(),
        &[
            "run", "--config", "run.conf", "--k", "7", "--out", "flagged",
        ],
    ));
    let metrics = fs::read_to_string(dir.path().join("flagged/metrics.json")).unwrap();
    assert!(metrics.contains("\"k\": 7"), "{metrics}");
}

#[test]
fn graph_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    ok(&polyfilter(
        dir.path(),
        &[
            "run",
            "--data",
            d,
            "--graph-cache",
            "g.bin",
            "--out",
            "first",
        ],
    ));
    assert!(dir.path().join("g.bin").exists());
    ok(&polyfilter(
        dir.path(),
        &[
            "run",
            "--data",
            d,
            "--graph-cache",
            "g.bin",
            "--out",
            "second",
        ],
    ));
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("first/metrics.json"), read("second/metrics.json"));
    // a different alpha must not reuse the cached graph
    let changed = polyfilter(
        dir.path(),
        &[
            "run",
            "--data",
            d,
            "--alpha",
            "0.9",
            "--graph-cache",
            "g.bin",
            "--out",
            "third",
        ],
    );
    ok(&changed);
    assert!(String::from_utf8_lossy(&changed.stderr).contains("rebuilding"));
}

#[test]
fn sweep_selects_on_validation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    ok(&polyfilter(
        dir.path(),
        &[
            "sweep",
            "--data",
            data.to_str().unwrap(),
            "--alphas",
            "0.3,0.7",
            "--ss",
            "1",
            "--kinds",
            "linear,ideal_approx",
            "--betas",
            "0.1,0.5",
        ],
    ));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    // 2 alphas x (linear + 2 betas)
    assert_eq!(
        csv.lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("alpha"))
            .count(),
        6
    );
    assert!(dir.path().join("out/sweep_test_metrics.json").exists());
}

#[test]
fn stats_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let stdout = ok(&polyfilter(
        dir.path(),
        &["stats", "--data", data.to_str().unwrap()],
    ));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["n_users"], 300);
    assert_eq!(v["n_items"], 200);
}
