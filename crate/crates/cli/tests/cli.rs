//! End-to-end runs of the `iclslope` binary on the shipped fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iclslope_cli::report::{Report, REPORT_SCHEMA};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn iclslope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iclslope"))
        .args(args)
        .env_remove("ICLSLOPE_ENDPOINT")
        .env_remove("ICLSLOPE_TOKEN")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn evaluate_into(out: &Path, extra: &[&str]) -> Output {
    let config = fixture("run.toml");
    let dataset = fixture("dataset.jsonl");
    let pool = fixture("pool.jsonl");
    let mut args = vec![
        "evaluate",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
        "--out-dir",
        path_str(out),
    ];
    args.extend_from_slice(extra);
    iclslope(&args)
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn validate_schema(report: &str) {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let instance: Value = serde_json::from_str(report).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn evaluate_matches_golden_byte_for_byte() {
    let golden_report = std::fs::read(fixture("golden/report.json")).unwrap();
    let golden_points = std::fs::read(fixture("golden/points.csv")).unwrap();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        assert_success(&evaluate_into(dir.path(), &[]));
        assert_eq!(std::fs::read(dir.path().join("report.json")).unwrap(), golden_report);
        assert_eq!(std::fs::read(dir.path().join("points.csv")).unwrap(), golden_points);
    }
    validate_schema(std::str::from_utf8(&golden_report).unwrap());
}

#[test]
fn bad_case_subset_filters_points() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&evaluate_into(dir.path(), &["--subset", "bad-cases"]));
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    validate_schema(&text);
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.subset, "bad_cases");
    // correct_1shot is false for every third instance: t01, t04, ..., t19.
    assert_eq!(report.n_points, 7);
    let csv = std::fs::read_to_string(dir.path().join("points.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",false")));
}

#[test]
fn k_shot_explodes_into_points() {
    let dir = tempfile::tempdir().unwrap();
    let ten: String = std::fs::read_to_string(fixture("dataset.jsonl"))
        .unwrap()
        .lines()
        .take(10)
        .map(|l| format!("{l}\n"))
        .collect();
    let dataset = dir.path().join("ten.jsonl");
    std::fs::write(&dataset, ten).unwrap();
    let config = fixture("run.toml");
    let pool = fixture("pool.jsonl");
    let out_dir = dir.path().join("out");
    let out = iclslope(&[
        "evaluate",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
        "--shots",
        "3",
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert_success(&out);
    let csv = std::fs::read_to_string(out_dir.join("points.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30);
    let report: Report =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!((report.n_points, report.shots), (30, 3));
}

#[test]
fn bad_cases_without_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, "{\"id\":\"x1\",\"question\":\"tom has 2 apples\",\"answer\":\"2\"}\n").unwrap();
    let config = fixture("run.toml");
    let pool = fixture("pool.jsonl");
    let out = iclslope(&[
        "evaluate",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
        "--subset",
        "bad-cases",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"x1\""));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn degenerate_fit_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, "{\"id\":\"x1\",\"question\":\"tom has 2 apples\",\"answer\":\"2\"}\n").unwrap();
    let config = fixture("run.toml");
    let pool = fixture("pool.jsonl");
    let out = iclslope(&[
        "evaluate",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn malformed_dataset_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("broken.jsonl");
    std::fs::write(
        &dataset,
        "{\"id\":\"1\",\"question\":\"q\",\"answer\":\"a\"}\n{\"id\":\"2\",\"question\":\"q\"}\n",
    )
    .unwrap();
    let config = fixture("run.toml");
    let pool = fixture("pool.jsonl");
    let out = iclslope(&[
        "evaluate",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
        "--out-dir",
        path_str(dir.path()),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr.contains("broken.jsonl:2:") && stderr.contains("answer"), "{stderr}");
}

#[test]
fn select_picks_hand_computed_winner() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("selection/corpus.txt");
    let dataset = fixture("selection/dataset.jsonl");
    let pool = fixture("selection/pool.jsonl");
    let out = iclslope(&[
        "select",
        "--corpus",
        path_str(&corpus),
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
        "--k",
        "1",
        "--prefilter",
        "2",
        "--max-tokens",
        "8",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(dir.path().join("selections.jsonl")).unwrap();
    let line: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    // BM25 puts the overlapping question first; learning gain prefers the
    // demonstration that follows the preliminary answer in the corpus.
    assert_eq!(line["candidates"], serde_json::json!(["a-overlap", "b-pears"]));
    assert_eq!(line["selected"][0]["id"], "b-pears");
    assert!(line["selected"][0]["gain"].as_f64().unwrap() > 0.0);
}

#[test]
fn paraphrase_of_reasoning_free_dataset_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.txt");
    let dataset = fixture("selection/dataset.jsonl");
    let out = iclslope(&[
        "paraphrase",
        "--corpus",
        path_str(&corpus),
        "--dataset",
        path_str(&dataset),
        "--max-tokens",
        "16",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_success(&out);
    assert_eq!(
        std::fs::read(dir.path().join("paraphrased.jsonl")).unwrap(),
        std::fs::read(&dataset).unwrap()
    );
}

#[test]
fn paraphrase_keeps_question_and_answer() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("run.toml");
    let dataset = fixture("dataset.jsonl");
    let out = iclslope(&[
        "paraphrase",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--max-tokens",
        "12",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_success(&out);
    let original = std::fs::read_to_string(&dataset).unwrap();
    let rewritten = std::fs::read_to_string(dir.path().join("paraphrased.jsonl")).unwrap();
    for (a, b) in original.lines().zip(rewritten.lines()) {
        let (a, b): (Value, Value) = (serde_json::from_str(a).unwrap(), serde_json::from_str(b).unwrap());
        assert_eq!(a["question"], b["question"]);
        assert_eq!(a["answer"], b["answer"]);
        if b.get("original_reasoning").is_some() {
            assert_eq!(a["reasoning"], b["original_reasoning"]);
        } else {
            assert_eq!(a["reasoning"], b["reasoning"]);
        }
    }
}

#[test]
fn synthesize_writes_tagged_pool_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("run.toml");
    let dataset = fixture("dataset.jsonl");
    let out = iclslope(&[
        "synthesize",
        "--config",
        path_str(&config),
        "--dataset",
        path_str(&dataset),
        "--k",
        "2",
        "--max-tokens",
        "12",
        "--fit",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_success(&out);
    let pool = std::fs::read_to_string(dir.path().join("synthetic_pool.jsonl")).unwrap();
    assert_eq!(pool.lines().count(), 40);
    assert!(pool.lines().all(|l| l.contains("\"id\":\"syn-")));
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    validate_schema(&text);
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.origin, iclslope::Origin::Synthetic);
    assert_eq!(report.n_points, 40);
}

#[test]
fn oracle_verify_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        iclslope(&["oracle-verify", "--worlds", "100", "--seed", "0", "--out-dir", path_str(dir.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(),
        4,
        "{stdout}"
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["bayes"]["worlds"], 100);
    assert!(report["slope_identity"]["max_residual"].as_f64().unwrap() <= 1e-12);
    assert!(report["bayes"]["max_residual"].as_f64().unwrap() <= 1e-10);
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if passed { 0 } else { 1 }));
}

#[test]
fn remote_backend_without_endpoint_is_rejected() {
    let dataset = fixture("dataset.jsonl");
    let pool = fixture("pool.jsonl");
    let out = iclslope(&[
        "evaluate",
        "--backend",
        "remote",
        "--dataset",
        path_str(&dataset),
        "--pool",
        path_str(&pool),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ICLSLOPE_ENDPOINT"));
}
