//! Drives the `triage` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn triage(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = triage(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema() -> Value {
    json!({"fields": {"component": "categorical", "opened": "date", "title": "text"}})
}

#[test]
fn expand_yields_one_derived_ticket_per_event() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("schema.json"), schema().to_string()).unwrap();
    // Ten bases with 1..=10 events: 55 events in all.
    let mut lines = String::new();
    for i in 1..=10u32 {
        let events: Vec<Value> = (0..i)
            .map(|k| json!({"t": format!("2021-01-{:02}T10:00:00Z", k + 1), "text": format!("step {k}")}))
            .collect();
        let t = json!({
            "id": format!("T{i}"),
            "static": {"component": "fw", "title": format!("ticket {i}"), "opened": "2021-01-01T09:00:00Z"},
            "events": events,
            "closed_at": "2021-02-01T00:00:00Z",
        });
        lines.push_str(&t.to_string());
        lines.push('\n');
    }
    std::fs::write(dir.join("corpus.jsonl"), lines).unwrap();
    let out = ok(
        dir,
        &[
            "-q",
            "expand",
            "--in",
            "corpus.jsonl",
            "--schema",
            "schema.json",
            "--out",
            "derived.jsonl",
        ],
    );
    let events: u64 = (1..=10).sum();
    assert_eq!(out["derived"], events);
    assert_eq!(out["bases"], 10);
    let written = std::fs::read_to_string(dir.join("derived.jsonl")).unwrap();
    assert_eq!(written.lines().count() as u64, events);
}

#[test]
fn missing_inputs_fail_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = triage(
        tmp.path(),
        &[
            "expand",
            "--in",
            "absent.jsonl",
            "--schema",
            "absent.json",
            "--out",
            "x.jsonl",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.jsonl"));

    let out = triage(
        tmp.path(),
        &["eval", "--model", "nope.json", "--data", "work"],
    );
    assert!(!out.status.success());

    let out = triage(tmp.path(), &["--config", "missing.toml", "ingest"]);
    assert!(!out.status.success());
}

#[test]
fn strict_ingest_rejects_bad_records() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("schema.json"), schema().to_string()).unwrap();
    std::fs::write(
        dir.join("corpus.jsonl"),
        "{\"id\":\"a\",\"static\":{\"component\":\"x\",\"title\":\"t\",\"opened\":\"2021-01-01T00:00:00Z\"},\"events\":[{\"t\":\"2021-01-02T00:00:00Z\"}],\"closed_at\":\"2021-01-05T00:00:00Z\"}\n{\"id\":\"b\"}\n",
    )
    .unwrap();
    let report = ok(
        dir,
        &[
            "-q",
            "ingest",
            "--in",
            "corpus.jsonl",
            "--schema",
            "schema.json",
        ],
    );
    assert_eq!(report["accepted"], 1);
    assert_eq!(report["rejections"].as_array().unwrap().len(), 1);
    let out = triage(
        dir,
        &[
            "ingest",
            "--strict",
            "--in",
            "corpus.jsonl",
            "--schema",
            "schema.json",
        ],
    );
    assert!(!out.status.success());
}

fn run_pipeline(dir: &Path) -> Vec<u8> {
    ok(
        dir,
        &[
            "-q",
            "--seed",
            "9",
            "synth",
            "--n-bases",
            "50",
            "--out-dir",
            ".",
        ],
    );
    fn with<'a>(rest: &[&'a str]) -> Vec<&'a str> {
        [&["-q", "--config", "triage.toml"][..], rest].concat()
    }
    ok(dir, &with(&["ingest"]));
    ok(dir, &with(&["expand", "--out", "derived.jsonl"]));
    ok(dir, &with(&["featurize"]));
    ok(dir, &with(&["label-extract"]));
    let trained = ok(
        dir,
        &with(&["train", "--target", "risk", "--out", "models/risk.json"]),
    );
    assert_eq!(trained["target"], "risk");
    ok(
        dir,
        &with(&[
            "train",
            "--target",
            "time_to_fix",
            "--out",
            "models/ttf.json",
        ]),
    );
    let report = ok(
        dir,
        &with(&[
            "eval",
            "--model",
            "models/risk.json",
            "--model",
            "models/ttf.json",
            "--out",
            "eval.json",
            "--csv",
            "eval.csv",
        ]),
    );
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        let f1 = r["weighted_f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    std::fs::read(dir.join("eval.json")).unwrap()
}

#[test]
fn pipeline_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    assert_eq!(first, second);
}

#[test]
fn models_refuse_a_different_feature_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "-q",
            "--seed",
            "1",
            "synth",
            "--n-bases",
            "30",
            "--out-dir",
            ".",
        ],
    );
    let c = ["-q", "--config", "triage.toml"];
    ok(dir, &[&c[..], &["featurize"]].concat());
    ok(dir, &[&c[..], &["label-extract"]].concat());
    ok(
        dir,
        &[&c[..], &["train", "--target", "debug", "--out", "m.json"]].concat(),
    );
    // Refit the features with another vocabulary size into a second work dir.
    let cfg = std::fs::read_to_string(dir.join("triage.toml"))
        .unwrap()
        .replace("tfidf_top_k = 50", "tfidf_top_k = 5")
        .replace("workdir = \"work\"", "workdir = \"work2\"");
    std::fs::write(dir.join("other.toml"), cfg).unwrap();
    ok(dir, &["-q", "--config", "other.toml", "featurize"]);
    ok(dir, &["-q", "--config", "other.toml", "label-extract"]);
    let out = triage(
        dir,
        &["--config", "other.toml", "eval", "--model", "m.json"],
    );
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("hash"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn preset_sets_the_published_forest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "-q",
            "--seed",
            "4",
            "synth",
            "--n-bases",
            "30",
            "--out-dir",
            ".",
        ],
    );
    let c = ["-q", "--config", "triage.toml"];
    ok(dir, &[&c[..], &["featurize"]].concat());
    ok(dir, &[&c[..], &["label-extract"]].concat());
    let out = ok(
        dir,
        &[
            &c[..],
            &["train", "--preset", "paper-rf-debug", "--out", "m.json"],
        ]
        .concat(),
    );
    assert_eq!(out["target"], "debug");
    let p = &out["params"];
    assert_eq!(p["max_depth"], 10);
    assert_eq!(p["max_features"], "sqrt");
    assert_eq!(p["n_estimators"], 297);
    assert_eq!(p["criterion"], "entropy");
}

#[test]
fn active_learning_commands_write_sessions_and_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "-q",
            "--seed",
            "3",
            "synth",
            "--n-bases",
            "40",
            "--out-dir",
            ".",
        ],
    );
    let c = ["-q", "--config", "triage.toml"];
    ok(dir, &[&c[..], &["featurize"]].concat());
    ok(dir, &[&c[..], &["label-extract"]].concat());
    let init = ok(
        dir,
        &[
            &c[..],
            &["al-init", "--out-dir", "sess", "--initial-size", "10"],
        ]
        .concat(),
    );
    assert_eq!(init["summary"]["n_labeled"], 10);
    assert!(dir.join("sess/session.json").exists());
    let sim = ok(
        dir,
        &[
            &c[..],
            &[
                "al-simulate",
                "--strategy",
                "both",
                "--steps",
                "3",
                "--initial-size",
                "10",
                "--out",
                "curve.csv",
            ],
        ]
        .concat(),
    );
    assert!(!sim["curve"].as_array().unwrap().is_empty());
    let csv = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert!(csv.starts_with("n_labeled,target,f1,strategy,seed\n"));
    assert!(csv.contains(",entropy,") && csv.contains(",random,"));
}
