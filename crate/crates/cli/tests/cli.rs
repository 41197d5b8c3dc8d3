use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use btswarm::metrics::LedgerReport;
use serde_json::{json, Value};

fn btswarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btswarm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(modality: &str) -> Value {
    json!({
        "arena": [400.0, 400.0],
        "targets": {"red": 2, "green": 2, "yellow": 2, "blue": 2},
        "zone_radius": 60.0,
        "comm_range": 150.0,
        "roster": [
            {"modality": modality, "class": "I", "count": 5},
            {"modality": modality, "class": "M", "count": 1}
        ],
        "iterations": 600,
        "seed": 4
    })
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn validate_accepts_good_and_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    write_json(&good, &small_config("EU"));
    let out = btswarm(&["validate", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("valid world config"));

    let mut bad_cfg = small_config("EU");
    bad_cfg["roster"][1]["colour"] = json!("red");
    let bad = dir.path().join("bad.json");
    write_json(&bad, &bad_cfg);
    let out = btswarm(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("roster[1].colour"), "{}", text(&out.stderr));

    let mut bad_value = small_config("EU");
    bad_value["robot"] = json!({"speed": -1.0});
    write_json(&bad, &bad_value);
    let out = btswarm(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("robot.speed"), "{}", text(&out.stderr));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(btswarm(&[]).status.code(), Some(2));
    assert_eq!(btswarm(&["run", "/no/such/config.json"]).status.code(), Some(2));
    let out = btswarm(&["study", "modality-compare", "--scale", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("0.25"));
    assert_eq!(btswarm(&["study", "no-such-study"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write_json(&cfg, &small_config("QRU"));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out_dir = blocker.join("sub");
    let out = btswarm(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
}

#[test]
fn run_is_reproducible_and_exports_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write_json(&cfg, &small_config("EBU"));
    let mut dumps = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        let out = btswarm(&["run", cfg.to_str().unwrap(), "--seed", "11", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(summary["queries"].as_u64().is_some());
        dumps.push((
            fs::read(out_dir.join("ledger.csv")).unwrap(),
            fs::read(out_dir.join("ledger.json")).unwrap(),
            fs::read(out_dir.join("knowledge.json")).unwrap(),
        ));
    }
    assert_eq!(dumps[0], dumps[1]);

    let report = LedgerReport::from_json(&text(&dumps[0].1)).unwrap();
    report.check().unwrap();
    assert_eq!(report.config.seed, 11);
    let csv = text(&dumps[0].0);
    assert!(csv.starts_with("iter,"));
    let knowledge: Vec<Value> = serde_json::from_slice(&dumps[0].2).unwrap();
    assert_eq!(knowledge.len(), 6);
    // The multi-target robot holds all four sequences.
    assert_eq!(knowledge[5]["knowledge"].as_array().unwrap().len(), 4);
}

#[test]
fn trace_lines_are_json_and_match_run_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write_json(&cfg, &small_config("QRU"));
    let out = btswarm(&["trace", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let lines: Vec<Value> = text(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    let mut last_iter = 0;
    for l in &lines {
        let kind = l["kind"].as_str().unwrap();
        assert!(kind == "query" || kind == "response");
        assert_eq!(l["to"].is_null(), kind == "query");
        let it = l["iter"].as_u64().unwrap();
        assert!(it >= last_iter);
        last_iter = it;
    }

    let trace_file = dir.path().join("t.jsonl");
    let out = btswarm(&["run", cfg.to_str().unwrap(), "--trace", trace_file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&trace_file).unwrap(), text(&btswarm(&["trace", cfg.to_str().unwrap()]).stdout));
}

#[test]
fn study_spec_writes_layout_and_ignores_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({
        "study": "comm-range",
        "modalities": ["QRU", "EU"],
        "sweep": [50, 200],
        "trials": 2,
        "base": small_config("QRU")
    });
    let spec_path = dir.path().join("spec.json");
    write_json(&spec_path, &spec);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = dir.path().join(format!("j{jobs}"));
        let out = btswarm(&[
            "study",
            spec_path.to_str().unwrap(),
            "--jobs",
            jobs,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        let root = out_dir.join("comm-range");
        for f in ["aggregate.csv", "plot.csv", "timeline.csv", "QRU-50/0.csv", "EU-200/1.csv"] {
            assert!(root.join(f).is_file(), "missing {f}");
        }
        outputs.push((out.stdout, fs::read(root.join("aggregate.csv")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let agg = text(&outputs[0].1);
    assert!(agg.starts_with("study,modality,comm_range,trials,"));
    assert_eq!(agg.lines().count(), 1 + 4);
}

#[test]
fn validate_detects_study_specs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let mut spec = json!({
        "study": "buffer-duration",
        "modalities": ["EBU"],
        "sweep": [10, 20],
        "trials": 1,
        "base": small_config("EBU")
    });
    write_json(&path, &spec);
    let out = btswarm(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("valid study spec"));

    spec["base"]["robot"] = json!({"sped": 1.0});
    write_json(&path, &spec);
    let out = btswarm(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("base.robot.sped"), "{}", text(&out.stderr));
}

#[test]
fn shipped_config_is_valid() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk-eu.json");
    let out = btswarm(&["validate", path]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}
