use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use plauskit::scoring::read_sentence_scores;
use plauskit::synth::write_demo_workspace;

fn plauskit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plauskit")).args(args).output().expect("spawn plauskit")
}

fn error_record(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    serde_json::from_str(lines[0]).expect("json error record")
}

fn tables(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn validate_names_missing_path() {
    let dir = tempfile::tempdir().unwrap();
    let ws = write_demo_workspace(dir.path(), 1).unwrap();
    let ok = plauskit(&["validate", "--config", ws.config.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("D1: 56 items"));

    fs::remove_file(dir.path().join("vectors.txt")).unwrap();
    let rec = error_record(&plauskit(&["validate", "--config", ws.config.to_str().unwrap()]));
    assert_eq!(rec["error"], "config");
    assert!(rec["message"].as_str().unwrap().contains("vectors.txt"), "{rec}");
}

#[test]
fn bad_inputs_give_one_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let ws = write_demo_workspace(dir.path(), 1).unwrap();
    let cfg = ws.config.to_str().unwrap();
    let rec = error_record(&plauskit(&["evaluate", "--config", cfg, "--set", "normalization=\"median\""]));
    assert_eq!(rec["error"], "config");

    let d1 = dir.path().join("d1.tsv");
    let text = fs::read_to_string(&d1).unwrap().replacen("\tAI\t", "\tXX\t", 1);
    fs::write(&d1, text).unwrap();
    let rec = error_record(&plauskit(&["validate", "--config", cfg]));
    assert_eq!(rec["error"], "parse");
    assert!(rec["message"].as_str().unwrap().contains("d1.tsv:2:"), "{rec}");

    let rec = error_record(&plauskit(&["validate", "--config", "/nonexistent/plauskit.toml"]));
    assert_eq!(rec["error"], "io");
}

#[test]
fn report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ws = write_demo_workspace(dir.path(), 2).unwrap();
    let cfg = ws.config.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = plauskit(&["report", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", "11"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (tables(&a), tables(&b));
    let names: Vec<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    for f in [
        "accuracy_bars.csv",
        "density_curves.csv",
        "evaluation.tsv",
        "manifest.json",
        "probe_curves.csv",
        "regression.tsv",
        "results.tsv",
        "scatter_pairs.csv",
    ] {
        assert!(names.contains(&f), "{f} missing from {names:?}");
    }
    assert_eq!(ta, tb);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_sha256"].as_str().unwrap();
    assert_eq!(manifest["seed"], 11);
    for (name, bytes) in &ta {
        if name.ends_with(".tsv") || name.ends_with(".csv") {
            let first = String::from_utf8_lossy(bytes).lines().next().unwrap().to_string();
            assert_eq!(first, format!("# plauskit config_sha256={hash} seed=11"), "{name}");
            assert!(manifest["files"][name.as_str()].is_string(), "{name} not in manifest");
        }
    }
    let bars = String::from_utf8(fs::read(a.join("accuracy_bars.csv")).unwrap()).unwrap();
    assert_eq!(bars.lines().nth(1).unwrap(), "dataset,item_type,scorer,accuracy,se,p,p_fdr");
    let curves = String::from_utf8(fs::read(a.join("probe_curves.csv")).unwrap()).unwrap();
    assert!(curves.lines().nth(1).unwrap().starts_with("train,test,layer,mean_acc,ceiling"));

    let c = dir.path().join("c");
    let o = plauskit(&["evaluate", "--config", cfg, "--out", c.to_str().unwrap(), "--seed", "12"]);
    assert!(o.status.success());
    let other: serde_json::Value = serde_json::from_slice(&fs::read(c.join("manifest.json")).unwrap()).unwrap();
    assert_ne!(other["config_sha256"], manifest["config_sha256"]);
}

#[test]
fn score_writes_baseline_files() {
    let dir = tempfile::tempdir().unwrap();
    let ws = write_demo_workspace(dir.path(), 3).unwrap();
    let out = dir.path().join("run");
    let o = plauskit(&["score", "--config", ws.config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for id in ["ppmi", "thematic_fit", "sdm"] {
        let scores = read_sentence_scores(&out.join("scores").join(format!("{id}.jsonl"))).unwrap();
        assert_eq!(scores.len(), 164, "{id}");
        assert!(scores.iter().all(|s| s.scorer_id == id && s.value.is_finite()));
    }
}

#[test]
fn set_overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let ws = write_demo_workspace(dir.path(), 4).unwrap();
    let out = dir.path().join("run");
    let o = plauskit(&[
        "evaluate",
        "--config",
        ws.config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "scorers.0.metric=\"last_word\"",
        "--set",
        "analyses.error_profile=false",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("error_profile.tsv").exists());
    assert!(out.join("evaluation.tsv").exists());
}
