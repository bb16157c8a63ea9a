use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn joci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_joci"))
        .args(args)
        .env_remove("JOCI_SEED")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = joci(args);
    assert!(
        out.status.success(),
        "joci {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs every stage into `dir` and returns the produced files.
fn pipeline(dir: &Path) -> Vec<PathBuf> {
    let p = |name: &str| dir.join(name);
    let tax = data("mini/taxonomy.tsv");
    ok(&["extract", "--in", s(&data("mini/corpus.conllu")), "--out", s(&p("props.jsonl"))]);
    ok(&["abstract", "--in", s(&p("props.jsonl")), "--taxonomy", s(&tax), "--out", s(&p("store.tsv"))]);
    ok(&["derive", "--store", s(&p("store.tsv")), "--taxonomy", s(&tax), "--out", s(&p("props.tsv"))]);
    ok(&[
        "generate",
        "--contexts",
        s(&data("mini/contexts.conllu")),
        "--properties",
        s(&p("props.tsv")),
        "--taxonomy",
        s(&tax),
        "--out",
        s(&p("hyps.jsonl")),
    ]);
    ok(&[
        "s2s", "train", "--pairs", s(&p("hyps.jsonl")), "--out", s(&p("s2s/ent.json")), "--epochs", "2", "--hidden", "8",
    ]);
    ok(&["s2s", "score", "--model", s(&p("s2s/ent.json")), "--pairs", s(&p("hyps.jsonl")), "--out", s(&p("scores.tsv"))]);
    for split in ["train", "test"] {
        let agg = p(&format!("{split}.jsonl"));
        let feats = p(&format!("{split}.tsv"));
        ok(&["aggregate", "--in", s(&data(&format!("mini/pairs_{split}.jsonl"))), "--out", s(&agg)]);
        ok(&["featurize", "--pairs", s(&agg), "--emb", s(&data("mini/embeddings.txt")), "--out", s(&feats)]);
    }
    ok(&["train-ordinal", "--features", s(&p("train.tsv")), "--out", s(&p("model.json"))]);
    ok(&["predict", "--model", s(&p("model.json")), "--features", s(&p("test.tsv")), "--out", s(&p("pred.tsv"))]);
    ok(&[
        "evaluate",
        "--train",
        s(&p("train.tsv")),
        "--test",
        s(&p("test.tsv")),
        "--report",
        s(&p("report.tsv")),
        "--permutations",
        "200",
    ]);
    ok(&["stats", "--pairs", s(&p("train.jsonl")), "--out", s(&p("stats.tsv"))]);
    [
        "props.jsonl", "store.tsv", "props.tsv", "hyps.jsonl", "s2s/ent.json", "scores.tsv", "train.jsonl", "test.jsonl",
        "train.tsv", "test.tsv", "model.json", "pred.tsv", "report.tsv", "stats.tsv",
    ]
    .iter()
    .map(|f| p(f))
    .collect()
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    for (x, y) in first.iter().zip(&second) {
        let (bx, by) = (fs::read(x).unwrap(), fs::read(y).unwrap());
        assert!(!bx.is_empty(), "{} is empty", x.display());
        assert!(bx == by, "{} differs between runs", x.file_name().unwrap().to_string_lossy());
    }
    let report = fs::read_to_string(a.path().join("report.tsv")).unwrap();
    assert!(report.contains("Regression"));
}

#[test]
fn extract_writes_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("nested/props.jsonl");
    ok(&["extract", "--in", s(&data("mini/corpus.conllu")), "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() > 100);
    // No temporary files are left behind.
    assert_eq!(fs::read_dir(out.parent().unwrap()).unwrap().count(), 1);
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.conllu");
    let out = joci(&["extract", "--in", s(&missing), "--out", s(&dir.path().join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.conllu"), "{err}");
    assert!(!dir.path().join("o.jsonl").exists());
}

#[test]
fn malformed_input_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.conllu");
    fs::write(&bad, "1\tA\ta\tDET\n\n").unwrap();
    let out = joci(&["extract", "--in", s(&bad), "--out", s(&dir.path().join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(joci(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(joci(&["extract"]).status.code(), Some(1));
    assert_eq!(joci(&["aggregate", "--in", "x", "--out", "y", "--na-policy", "sometimes"]).status.code(), Some(1));
}

#[test]
fn every_subcommand_has_help() {
    let commands: &[&[&str]] = &[
        &["extract"],
        &["abstract"],
        &["derive"],
        &["generate"],
        &["s2s", "train"],
        &["s2s", "score"],
        &["s2s", "decode"],
        &["aggregate"],
        &["featurize"],
        &["train-ordinal"],
        &["predict"],
        &["evaluate"],
        &["ablate"],
        &["stats"],
    ];
    for cmd in commands {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = ok(&args);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{cmd:?}");
    }
}

#[test]
fn config_supplies_the_corpus_path() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    let corpus = data("mini/corpus.conllu");
    fs::write(&cfg, format!(r#"{{"paths": {{"corpus": {:?}}}, "seed": 5}}"#, s(&corpus))).unwrap();
    let via_cfg = dir.path().join("a.jsonl");
    let via_flag = dir.path().join("b.jsonl");
    ok(&["--config", s(&cfg), "extract", "--out", s(&via_cfg)]);
    ok(&["extract", "--in", s(&corpus), "--out", s(&via_flag)]);
    assert_eq!(fs::read(via_cfg).unwrap(), fs::read(via_flag).unwrap());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"min_cuont": 3}"#).unwrap();
    let out = joci(&["--config", s(&cfg), "extract", "--in", s(&data("mini/corpus.conllu")), "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_cuont"));
}
