use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_learnsat");

/// A small, fast experiment: few reviews, short Gibbs chains, light backbones.
const SMALL_CONFIG: &str = r#"{
  "_notes": "integration-test config",
  "data": {"synthetic": {"n_reviews": 400, "n_courses": 12}},
  "topics": {"iterations": 60, "burn_in": 40, "thin": 5, "fold_in_iterations": 20, "fold_in_burn_in": 10},
  "backbones": [
    {"name": "LR", "model": {"kind": "linear"}},
    {"name": "GBRT", "model": {"kind": "gbrt", "rounds": 20}},
    {"name": "MLP", "model": {"kind": "mlp", "layers": [16], "epochs": 20}}
  ],
  "eval": {"top_errors": 3}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn learnsat(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(output: Output) -> Output {
    assert!(
        output.status.success(),
        "exit {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn train_without_featurize_names_the_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let out = tmp.path().join("out");
    ok(learnsat(&["synth"], &cfg, &out));
    ok(learnsat(&["split"], &cfg, &out));
    let result = learnsat(&["train"], &cfg, &out);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("`featurize`"), "{stderr}");
}

#[test]
fn stage_commands_compose_and_rerun_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let run = |out: &Path| {
        for cmd in [
            "synth",
            "split",
            "fit-topics",
            "embed",
            "featurize",
            "train",
            "benchmark",
            "ablate",
            "report",
        ] {
            ok(learnsat(&[cmd], &cfg, out));
        }
        snapshot(out)
    };
    let first = run(&tmp.path().join("a"));
    let second = run(&tmp.path().join("b"));
    for name in [
        "config.resolved.json",
        "reviews.jsonl",
        "split.json",
        "vocab.json",
        "topics.json",
        "embeddings.emb",
        "features.json",
        "design_full.csv",
        "models/gbrt.json",
        "benchmark.json",
        "benchmark.txt",
        "ablation.json",
        "report.txt",
    ] {
        assert!(first.contains_key(name), "missing {name}");
    }
    let mut a = first.clone();
    let mut b = second;
    a.remove("config.resolved.json");
    b.remove("config.resolved.json");
    assert_eq!(a, b);

    // rerunning in place leaves every file unchanged
    let out = tmp.path().join("a");
    ok(learnsat(&["benchmark"], &cfg, &out));
    assert_eq!(snapshot(&out), first);
}

#[test]
fn benchmark_runs_end_to_end_after_synth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let out = tmp.path().join("out");
    ok(learnsat(&["synth"], &cfg, &out));
    let stdout = String::from_utf8(ok(learnsat(&["benchmark"], &cfg, &out)).stdout).unwrap();
    for label in [
        "LR",
        "GBRT",
        "MLP",
        "BoW + LR",
        "Topic + LR",
        "Sentiment + LR",
        "ref_rmse",
    ] {
        assert!(stdout.contains(label), "{label} missing from\n{stdout}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("benchmark.json")).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["status"], "ok");
        assert!(row["rmse"].as_f64().unwrap() >= row["mae"].as_f64().unwrap());
    }
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 42);
    assert_eq!(resolved["topics"]["pool_by_course"], true);
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in [
        r#"{"seeds": 1}"#,
        r#"{"split": {"train": 0.9, "val": 0.2, "test": 0.1}}"#,
        r#"{"eval": {"masks": ["-everything"]}}"#,
        "not json",
    ] {
        let cfg = write_config(tmp.path(), text);
        let result = learnsat(&["split"], &cfg, &out);
        assert_eq!(result.status.code(), Some(2), "{text}");
    }
    let missing = learnsat(&["synth"], &tmp.path().join("nope.json"), &out);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn failed_assertions_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace(
        r#""eval": {"top_errors": 3}"#,
        r#""eval": {"top_errors": 3, "expect_benchmark_order": ["BoW + LR", "LR"], "min_gap": 10.0}"#,
    );
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    ok(learnsat(&["synth"], &cfg, &out));
    let result = learnsat(&["benchmark"], &cfg, &out);
    assert_eq!(result.status.code(), Some(3));
    let text = std::fs::read_to_string(out.join("benchmark.txt")).unwrap();
    assert!(text.contains("[FAIL]"));
}

#[test]
fn report_without_results_names_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let result = learnsat(&["report"], &cfg, &tmp.path().join("out"));
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("`benchmark`"));
}

#[test]
fn ingest_round_trips_synthetic_reviews() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let gen = tmp.path().join("gen");
    ok(learnsat(&["synth"], &cfg, &gen));
    let text = SMALL_CONFIG.replace(
        r#""_notes": "integration-test config","#,
        &format!(r#""data": {{"path": {:?}}},"#, gen.join("reviews.jsonl")),
    );
    let text = text.replace(r#""data": {"synthetic": {"n_reviews": 400, "n_courses": 12}},"#, "");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("ingested");
    ok(learnsat(&["ingest"], &cfg, &out));
    assert_eq!(
        std::fs::read(gen.join("reviews.jsonl")).unwrap(),
        std::fs::read(out.join("reviews.jsonl")).unwrap()
    );
    assert_eq!(std::fs::read_to_string(out.join("rejects.jsonl")).unwrap(), "");
}
