use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aspectcse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aspectcse"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = aspectcse(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const OUTPUTS: [&str; 11] = [
    "kg.jsonl",
    "corpus.jsonl",
    "filtered.jsonl",
    "train.jsonl",
    "test.jsonl",
    "triplets.jsonl",
    "model.bin",
    "loss.csv",
    "test.emb",
    "eval.json",
    "plot.svg",
];

/// synth -> build-corpus -> filter -> split -> triplets -> train -> embed ->
/// eval -> project. Returns the eval stdout.
fn pipeline(dir: &Path) -> String {
    fs::write(
        dir.join("train.cfg"),
        "# small model for tests\ntraining_epochs = 3\nembedding_dim = 16\nhidden_dim = 16\noutput_dim = 8\nlearning_rate = 0.003\n",
    )
    .unwrap();
    ok(dir, &["synth", "--out", "kg.jsonl", "--documents", "200", "--labels", "4", "--background", "10", "--without-article", "4", "--seed", "11"]);
    ok(dir, &["build-corpus", "--records", "kg.jsonl", "--aspect", "country=P17", "--aspect", "industry=P452", "--out", "corpus.jsonl"]);
    ok(dir, &["filter", "--corpus", "corpus.jsonl", "--out", "filtered.jsonl"]);
    ok(dir, &["split", "--corpus", "filtered.jsonl", "--train-out", "train.jsonl", "--test-out", "test.jsonl", "--seed", "11"]);
    ok(dir, &["triplets", "--corpus", "train.jsonl", "--scheme", "single", "--aspect", "country", "--per-anchor", "5", "--out", "triplets.jsonl", "--seed", "11"]);
    ok(dir, &["train", "--corpus", "train.jsonl", "--examples", "triplets.jsonl", "--config", "train.cfg", "--model-out", "model.bin", "--loss-out", "loss.csv", "--seed", "11"]);
    ok(dir, &["embed", "--model", "model.bin", "--corpus", "test.jsonl", "--out", "test.emb"]);
    let eval = ok(dir, &["eval", "--corpus", "test.jsonl", "--embeddings", "test.emb", "--aspect", "country", "--k", "10", "--out", "eval.json"]);
    ok(dir, &["project", "--corpus", "test.jsonl", "--embeddings", "test.emb", "--aspect", "country", "--out", "plot.svg"]);
    eval
}

#[test]
fn end_to_end_pipeline_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let evals: Vec<String> = dirs.iter().map(|d| pipeline(d.path())).collect();
    assert_eq!(evals[0], evals[1]);
    for name in OUTPUTS {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between runs");
    }

    let report: serde_json::Value = serde_json::from_str(&evals[0]).unwrap();
    assert_eq!(report["aspect"], "country");
    assert_eq!(report["k"], 10);
    for key in ["precision", "recall", "mrr"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(report["queries"].as_array().unwrap().len() > 10);
    // Trained on country, the model should beat a random ranking (about 1/4).
    assert!(report["precision"].as_f64().unwrap() > 0.4, "{}", report["precision"]);
    let written = fs::read_to_string(dirs[0].path().join("eval.json")).unwrap();
    assert_eq!(written.trim_end(), evals[0].trim_end());

    let test_docs = fs::read_to_string(dirs[0].path().join("test.jsonl")).unwrap().lines().count();
    let svg = fs::read_to_string(dirs[0].path().join("plot.svg")).unwrap();
    assert_eq!(svg.matches("class=\"marker\"").count(), test_docs);
}

#[test]
fn seed_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--out", "a.jsonl", "--documents", "50", "--seed", "1"]);
    ok(p, &["synth", "--out", "b.jsonl", "--documents", "50", "--seed", "2"]);
    assert_ne!(fs::read(p.join("a.jsonl")).unwrap(), fs::read(p.join("b.jsonl")).unwrap());
}

#[test]
fn eval_scores_third_party_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("c.jsonl"),
        concat!(
            r#"{"id":"a","text":"x","labels":{"topic":["t1"]}}"#, "\n",
            r#"{"id":"b","text":"x","labels":{"topic":["t1"]}}"#, "\n",
            r#"{"id":"c","text":"x","labels":{"topic":["t2"]}}"#, "\n",
            r#"{"id":"d","text":"x"}"#, "\n",
        ),
    )
    .unwrap();
    fs::write(p.join("e.emb"), "a 1 0\nb 0.9 0.1\nc 0 1\nd -1 0\n").unwrap();
    let out = ok(p, &["eval", "--corpus", "c.jsonl", "--embeddings", "e.emb", "--aspect", "topic", "--k", "1"]);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    // a and b retrieve each other; c has no relevant document and is skipped.
    assert_eq!(report["precision"].as_f64(), Some(1.0));
    assert_eq!(report["mrr"].as_f64(), Some(1.0));
    assert_eq!(report["skipped_queries"].as_u64(), Some(1));
}

#[test]
fn stats_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("c.jsonl"),
        concat!(
            r#"{"id":"a","text":"x","labels":{"industry":["a"]}}"#, "\n",
            r#"{"id":"b","text":"x","labels":{"industry":["a","b"]}}"#, "\n",
            r#"{"id":"c","text":"x","labels":{}}"#, "\n",
        ),
    )
    .unwrap();
    let stats: serde_json::Value = serde_json::from_str(&ok(p, &["stats", "--corpus", "c.jsonl"])).unwrap();
    assert_eq!(stats["background"], 1);
    assert_eq!(stats["aspects"]["industry"]["documents"], 2);
    assert_eq!(stats["aspects"]["industry"]["labels"], 2);
}

#[test]
fn missing_examples_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.jsonl"), r#"{"id":"a","text":"x","labels":{"t":["1"]}}"#).unwrap();
    let out = aspectcse(p, &["train", "--corpus", "c.jsonl", "--examples", "missing-triplets.jsonl", "--model-out", "m.bin"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing-triplets.jsonl"), "{stderr}");
    assert!(!p.join("m.bin").exists());
}

#[test]
fn unknown_subcommand_or_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["stats", "--bogus", "x"][..]] {
        let out = aspectcse(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}

#[test]
fn malformed_corpus_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.jsonl"), "{\"id\":\"a\",\"text\":\"x\"}\nnot json\n").unwrap();
    let out = aspectcse(p, &["stats", "--corpus", "c.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("c.jsonl:2"));
}
