use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn rerank(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rerank"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = rerank(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A small synthetic log shared by the tests: 5 users, 4 days, 3000 scored SERPs.
fn fixture() -> &'static (TempDir, PathBuf, PathBuf) {
    static DIR: OnceLock<(TempDir, PathBuf, PathBuf)> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let log = dir.path().join("synth.tsv");
        let truth = dir.path().join("truth.csv");
        ok(
            &[
                "synth", "--set", "users=5", "--seed", "42", "--out", "synth.tsv", "--truth", "truth.csv",
            ],
            dir.path(),
        );
        (dir, log, truth)
    })
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(csv: &str) -> usize {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).count()
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = TempDir::new().unwrap();
    for sub in [
        vec![],
        vec!["parse-check"],
        vec!["label"],
        vec!["synth"],
        vec!["topics"],
        vec!["train-experts"],
        vec!["replay"],
        vec!["compare"],
        vec!["hsmm"],
        vec!["hsmm", "train"],
        vec!["hsmm", "eval"],
        vec!["hsmm", "predict"],
        vec!["report"],
    ] {
        let mut args = sub.clone();
        args.push("--help");
        let out = rerank(&args, dir.path());
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(rerank(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(rerank(&["parse-check"], dir.path()).status.code(), Some(2));
    assert_eq!(
        rerank(&["replay", "--log", "x", "--policy", "nope", "--out", "y"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        rerank(&["synth", "--set", "bogus=1", "--out", "a", "--truth", "b"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn strict_parse_check_reports_line() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.tsv"), "1\tM\t0\t5\n1\t0\tQ\tnot-a-number\n").unwrap();
    let out = rerank(&["parse-check", "--log", "bad.tsv", "--strict"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");

    let lenient = ok(&["parse-check", "--log", "bad.tsv"], dir.path());
    assert!(lenient.contains("malformed=1"), "{lenient}");
}

#[test]
fn missing_input_is_data_error() {
    let dir = TempDir::new().unwrap();
    let out = rerank(&["parse-check", "--log", "absent.tsv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_writes_five_entries_with_lifts() {
    let (dir, log, truth) = fixture();
    let out = dir.path().join("cmp.json");
    let line = ok(
        &[
            "compare",
            "--log", log.to_str().unwrap(),
            "--truth", truth.to_str().unwrap(),
            "--policies", "default,random,linucb,ts-linear,gts",
            "--clusters", "7",
            "--seed", "42",
            "--lda-iterations", "30",
            "--out", out.to_str().unwrap(),
            "--csv", "cmp.csv",
        ],
        dir.path(),
    );
    assert_eq!(line.lines().count(), 1);
    let report = read_json(&out);
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 5);
    for r in results {
        assert!(r["ctr_at_1"].is_f64());
        assert!(r["lift_vs_default"].is_f64());
    }
    assert_eq!(report["master_seed"], 42);
    assert_eq!(report["config"]["topics"], 7);
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
    assert!(report["version"].is_string());

    // five policies, one trace row per 1000 events each
    let csv = std::fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    let events = report["events"].as_u64().unwrap() as usize;
    assert_eq!(data_rows(&csv), 5 * (events / 1000));

    let again = dir.path().join("cmp.csv.2");
    ok(
        &["report", "--input", out.to_str().unwrap(), "--format", "csv", "--out", again.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(csv, std::fs::read_to_string(again).unwrap());
}

fn replay_json(dir: &Path, log: &Path, name: &str, extra: &[&str]) -> Value {
    let mut args = vec![
        "replay",
        "--log", log.to_str().unwrap(),
        "--policy", "gts",
        "--lda-iterations", "30",
        "--out", name,
    ];
    args.extend_from_slice(extra);
    ok(&args, dir);
    read_json(&dir.join(name))
}

#[test]
fn replay_is_deterministic_apart_from_timestamp() {
    let (dir, log, _) = fixture();
    let mut a = replay_json(dir.path(), log, "r1.json", &["--seed", "7"]);
    let mut b = replay_json(dir.path(), log, "r2.json", &["--seed", "7"]);
    assert!(a["timestamp"].is_string());
    a.as_object_mut().unwrap().remove("timestamp");
    b.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(a, b);
}

#[test]
fn trace_csv_granularity_and_empty_trace() {
    let (dir, log, _) = fixture();
    let report = replay_json(dir.path(), log, "t.json", &["--csv", "t.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let events = report["events"].as_u64().unwrap() as usize;
    assert!(events >= 3000);
    assert_eq!(data_rows(&csv), events / 1000);
    assert!(csv.starts_with("# version="));

    replay_json(dir.path(), log, "e.json", &["--trace-every", "1000000", "--csv", "e.csv"]);
    let empty = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert_eq!(data_rows(&empty), 0);
    assert_eq!(empty.lines().filter(|l| !l.starts_with('#')).count(), 1);
}

#[test]
fn config_file_and_flags_layer() {
    let (dir, log, _) = fixture();
    std::fs::write(dir.path().join("replay.cfg"), "# test\ngamma = 0.2\ntopics = 3\n").unwrap();
    let r = replay_json(dir.path(), log, "c.json", &["--config", "replay.cfg", "--clusters", "4"]);
    assert_eq!(r["config"]["gamma"], 0.2);
    assert_eq!(r["config"]["topics"], 4);
}

#[test]
fn hsmm_round_trip_on_sequence_file() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("seqs.txt"), "0 1 1 2\n2 2 0\n# comment\n1,0,0,1,2\n").unwrap();
    ok(
        &[
            "hsmm", "train", "--sequences", "seqs.txt", "--states", "2", "--max-duration", "2",
            "--iterations", "5", "--out", "h.bin", "--report", "h.json",
        ],
        dir.path(),
    );
    let trace = read_json(&dir.path().join("h.json"))["log_likelihood"].as_array().unwrap().clone();
    assert_eq!(trace.len(), 6);
    for w in trace.windows(2) {
        assert!(w[1].as_f64().unwrap() >= w[0].as_f64().unwrap() - 1e-9);
    }
    let eval = ok(&["hsmm", "eval", "--model", "h.bin", "--sequences", "seqs.txt"], dir.path());
    assert!(eval.contains("sequences=3"), "{eval}");
    ok(
        &["hsmm", "predict", "--model", "h.bin", "--sequences", "seqs.txt", "--out", "p.json"],
        dir.path(),
    );
    let preds = read_json(&dir.path().join("p.json"));
    for p in preds["predictions"].as_array().unwrap() {
        let total: f64 = p["next_state"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn label_and_topics_outputs() {
    let (dir, log, _) = fixture();
    ok(&["label", "--log", log.to_str().unwrap(), "--out", "labels.tsv"], dir.path());
    let labels = std::fs::read_to_string(dir.path().join("labels.tsv")).unwrap();
    assert!(labels.starts_with("# version="));
    // header plus one row per SERP
    assert_eq!(labels.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4000);

    ok(
        &[
            "topics", "--log", log.to_str().unwrap(), "--clusters", "3", "--iterations", "20", "--out", "topics.bin",
            "--assignments", "asg.tsv",
        ],
        dir.path(),
    );
    let asg = std::fs::read_to_string(dir.path().join("asg.tsv")).unwrap();
    assert_eq!(data_rows(&asg), 1000);
}
