use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn yesno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yesno"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = yesno(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// identify → distill → plan → train → predict → evaluate into `dir`.
fn pipeline(dir: &Path, seed: &str) {
    let corpus = fixture("dialogues60.jsonl");
    let gold = fixture("gold_small.jsonl");
    let test = fixture("probe_instances.jsonl");
    let (matches, distant, plan, model, preds, report) = (
        dir.join("matches.jsonl"),
        dir.join("distant.jsonl"),
        dir.join("plan"),
        dir.join("model.bin"),
        dir.join("preds.jsonl"),
        dir.join("report.json"),
    );
    ok(&[
        "identify", "--corpus", s(&corpus), "--mode", "strict", "--seed", seed, "--out", s(&matches),
        "--audit", s(&dir.join("audit.tsv")),
    ]);
    ok(&[
        "distill", "--corpus", s(&corpus), "--matches", s(&matches), "--balance", "--seed", seed, "--out",
        s(&distant),
    ]);
    ok(&[
        "plan", "--gold", s(&gold), "--distant", s(&distant), "--strategy", "blended", "--alpha", "0.5", "--m",
        "3", "--n", "2", "--seed", seed, "--out", s(&plan),
    ]);
    ok(&["train", "--plan", s(&plan), "--out", s(&model), "--seed", seed]);
    ok(&["predict", "--model", s(&model), "--in", s(&test), "--out", s(&preds)]);
    ok(&["evaluate", "--gold", s(&test), "--pred", s(&preds), "--out", s(&report)]);
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_exits_zero() {
    let out = yesno(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["identify", "distill", "plan", "train", "predict", "evaluate", "probe"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(yesno(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(yesno(&["identify", "--corpus"]).status.code(), Some(2));
}

#[test]
fn missing_input_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let out = yesno(&["identify", "--corpus", s(&missing), "--out", s(&dir.path().join("m.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn malformed_input_names_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"a\"}\nnot json\n").unwrap();
    let out = yesno(&["identify", "--corpus", s(&bad), "--out", s(&dir.path().join("m.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(s(&bad)), "{err}");
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn full_pipeline_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "7");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["per_label", "macro_f1", "weighted_f1", "accuracy", "n"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(report["n"], 3);
    assert!(report.get("mcnemar").is_none());
    assert_eq!(files_under(&dir.path().join("plan")).len(), 6);
}

#[test]
fn reruns_are_byte_identical_and_inputs_untouched() {
    let inputs: Vec<PathBuf> = ["dialogues60.jsonl", "gold_small.jsonl", "probe_instances.jsonl"]
        .iter()
        .map(|f| fixture(f))
        .collect();
    let before: Vec<Vec<u8>> = inputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "7");
    pipeline(b.path(), "7");
    assert_eq!(files_under(a.path()), files_under(b.path()));
    let after: Vec<Vec<u8>> = inputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "alpha = 0.8\nm = 2\nn = 1\nstrategy = \"blended\"\n").unwrap();
    let gold = fixture("gold_small.jsonl");
    let out = ok(&[
        "plan", "--config", s(&config), "--gold", s(&gold), "--distant", s(&gold), "--alpha", "0.2", "--out",
        s(&dir.path().join("plan")),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan/plan.json")).unwrap()).unwrap();
    assert_eq!(manifest["alpha"], 0.2);
    assert_eq!(manifest["m"], 2);
    assert_eq!(manifest["epoch_sizes"].as_array().unwrap().len(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("effective config"));
}

#[test]
fn bad_config_value_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "alpha = \"high\"\n").unwrap();
    let gold = fixture("gold_small.jsonl");
    let out = yesno(&[
        "plan", "--config", s(&config), "--gold", s(&gold), "--distant", s(&gold), "--out",
        s(&dir.path().join("plan")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = yesno(&[
        "plan", "--gold", s(&gold), "--distant", s(&gold), "--alpha", "1.5", "--out",
        s(&dir.path().join("plan")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn probe_replays_recordings_and_evaluate_compares() {
    let dir = tempfile::tempdir().unwrap();
    let test = fixture("probe_instances.jsonl");
    let llm = dir.path().join("llm.jsonl");
    ok(&[
        "probe", "--in", s(&test), "--shots", "4", "--client", "replay", "--store", s(&fixture("replay")),
        "--out", s(&llm),
    ]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&llm)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["label"], "middle");
    assert_eq!(lines[1]["label"], "yes");
    assert!(lines[2]["label"].is_null());
    assert_eq!(lines[2]["raw"], " I am not");
    assert!(dir.path().join("llm.manifest.json").exists());

    let report = dir.path().join("r.json");
    ok(&["evaluate", "--gold", s(&test), "--pred", s(&llm), "--out", s(&report)]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["excluded"], 1);
    assert_eq!(r["n"], 2);
    assert_eq!(r["accuracy"], 1.0);
    ok(&["evaluate", "--gold", s(&test), "--pred", s(&llm), "--strict", "--pred2", s(&llm), "--mcnemar", "exact", "--out", s(&report)]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["n"], 3);
    assert_eq!(r["mcnemar"]["p_value"], 1.0);

    // only 4-shot prompts were recorded
    let out = yesno(&[
        "probe", "--in", s(&test), "--shots", "0", "--store", s(&fixture("replay")), "--out", s(&llm),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no recording"));
}
