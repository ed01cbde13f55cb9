use std::path::Path;
use std::process::{Command, Output};

fn uos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uos")).args(args).output().expect("run uos")
}

fn stdout(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1);
    serde_json::from_str(text.trim()).unwrap()
}

fn synth_uos(dir: &Path) -> String {
    let cfg = dir.join("s.cfg");
    std::fs::write(&cfg, "# small instance\nkind = uos\nm = 20\nsubspaces = 3\ndim = 2\npoints_per_subspace = 12\n")
        .unwrap();
    let out = dir.join("data");
    stdout(&uos(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]));
    out.join("manifest.txt").display().to_string()
}

#[test]
fn synth_then_cluster_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_uos(dir.path());
    let labels = dir.path().join("pred.txt");
    let r = stdout(&uos(&["cluster", "--data", &data, "--clusters", "3", "--out", labels.to_str().unwrap()]));
    assert_eq!(r["command"], "cluster");
    assert!(r["accuracy"].as_f64().unwrap() >= 0.99);
    assert_eq!(r["labels"].as_array().unwrap().len(), 36);

    let truth = dir.path().join("data/labels.txt");
    let e = stdout(&uos(&["eval", "--pred", labels.to_str().unwrap(), "--truth", truth.to_str().unwrap()]));
    assert_eq!(e["clustering_accuracy"], r["accuracy"]);
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = uos(&["synth", "--out", out.to_str().unwrap(), "--set", "m=10", "--set", "dim=2", "--set", "subspaces=2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("points_per_subspace"));
}

#[test]
fn unknown_key_and_subcommand_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_uos(dir.path());
    let o = uos(&["cluster", "--data", &data, "--clusters", "3", "--set", "lamda=0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    assert_eq!(uos(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(uos(&["cluster", "--data", "/nonexistent/manifest.txt", "--clusters", "2"]).status.code(), Some(2));
}

#[test]
fn lrr_equals_cslrr_with_zero_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_uos(dir.path());
    let lrr = stdout(&uos(&["cluster", "--data", &data, "--clusters", "3", "--method", "lrr"]));
    let cs = stdout(&uos(&[
        "cluster",
        "--data",
        &data,
        "--clusters",
        "3",
        "--method",
        "cslrr",
        "--alpha",
        "0",
        "--beta",
        "0",
    ]));
    assert_eq!(lrr["labels"], cs["labels"]);
    assert_eq!(lrr["iterations"], cs["iterations"]);
    let conflict = uos(&["cluster", "--data", &data, "--clusters", "3", "--method", "lrr", "--alpha", "1"]);
    assert_eq!(conflict.status.code(), Some(2));
}

#[test]
fn trace_and_csv_emit_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_uos(dir.path());
    let csv = dir.path().join("res.csv");
    let o = uos(&["cluster", "--data", &data, "--clusters", "3", "--trace", "--emit-csv", csv.to_str().unwrap()]);
    let r = stdout(&o);
    let iters = r["iterations"].as_u64().unwrap() as usize;
    let trace = String::from_utf8_lossy(&o.stderr);
    assert_eq!(trace.lines().filter(|l| l.starts_with("iter=")).count(), iters);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), iters + 1);
}

#[test]
fn hierarchy_tree_feeds_classification_and_bundles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).display().to_string();
    stdout(&uos(&[
        "synth",
        "--out",
        &p("seq"),
        "--set",
        "kind=sequences",
        "--set",
        "m=30",
        "--set",
        "classes=3",
        "--set",
        "train_per_class=6",
        "--set",
        "test_per_class=3",
        "--set",
        "disjoint_templates=true",
        "--set",
        "format=csv",
    ]));
    let (train, test) = (p("seq/train/manifest.txt"), p("seq/test/manifest.txt"));
    let h = stdout(&uos(&[
        "hierarchy",
        "--data",
        &train,
        "--levels",
        "2",
        "--out",
        &p("tree.bin"),
        "--summary",
        &p("tree.txt"),
    ]));
    assert!(std::fs::read_to_string(p("tree.txt")).unwrap().lines().count() > h["leaves"].as_u64().unwrap() as usize);

    let trained = stdout(&uos(&[
        "classify",
        "--train",
        &train,
        "--test",
        &test,
        "--tree",
        &p("tree.bin"),
        "--save-bundle",
        &p("model.bin"),
        "--out",
        &p("pred.txt"),
    ]));
    assert_eq!(trained["leaves"], h["leaves"]);
    let reused = stdout(&uos(&["classify", "--test", &test, "--bundle", &p("model.bin")]));
    assert_eq!(trained["predictions"], reused["predictions"]);
    assert_eq!(std::fs::read_to_string(p("pred.txt")).unwrap().lines().count(), 9);
}

#[test]
fn open_set_needs_varsigma() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).display().to_string();
    stdout(&uos(&[
        "synth",
        "--out",
        &p("seq"),
        "--set",
        "kind=sequences",
        "--set",
        "m=30",
        "--set",
        "classes=2",
        "--set",
        "train_per_class=5",
        "--set",
        "test_per_class=2",
    ]));
    let o = uos(&[
        "classify",
        "--train",
        &p("seq/train/manifest.txt"),
        "--test",
        &p("seq/test/manifest.txt"),
        "--set",
        "open_set=true",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("varsigma"));
}
