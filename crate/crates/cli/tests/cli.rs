use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_htsparse"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    run(args, dir).status.code().expect("exit code")
}

/// Small synthetic corpus in a fresh directory.
fn corpus() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["synth", "--docs", "300", "--queries", "30", "--vocab", "2000", "--out-dir", "data"],
        dir.path(),
    );
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let a = corpus();
    let b = corpus();
    for f in ["docs.jsonl", "queries.jsonl", "qrels.txt", "triples.jsonl"] {
        let path = PathBuf::from("data").join(f);
        assert_eq!(read(a.path(), path.to_str().unwrap()), read(b.path(), path.to_str().unwrap()), "{f}");
    }
}

#[test]
fn maxscore_and_exhaustive_runs_are_byte_identical() {
    let dir = corpus();
    let d = dir.path();
    for bits in ["0", "8", "16"] {
        ok(&["build", "--docs", "data/docs.jsonl", "--vocab", "2000", "--bits", bits, "--out", "i.idx"], d);
        for k in ["10", "1000"] {
            for (algo, out) in [("maxscore", "a.txt"), ("exhaustive", "b.txt")] {
                ok(
                    &[
                        "search", "--index", "i.idx", "--queries", "data/queries.jsonl", "--vocab", "2000",
                        "--k", k, "--t-q", "0.3", "--algo", algo, "--run-out", out,
                    ],
                    d,
                );
            }
            let (a, b) = (read(d, "a.txt"), read(d, "b.txt"));
            assert!(!a.is_empty());
            assert_eq!(a, b, "bits {bits} k {k}");
        }
    }
}

#[test]
fn cut_and_ht_write_identical_index_files() {
    let dir = corpus();
    let d = dir.path();
    ok(&["build", "--docs", "data/docs.jsonl", "--vocab", "2000", "--mode", "cut:0.5", "--out", "cut.idx"], d);
    ok(&["build", "--docs", "data/docs.jsonl", "--vocab", "2000", "--mode", "ht:0.5", "--out", "ht.idx"], d);
    assert_eq!(read(d, "cut.idx"), read(d, "ht.idx"));
}

#[test]
fn eval_of_ideal_ordering_is_perfect() {
    let dir = corpus();
    let d = dir.path();
    let qrels = String::from_utf8(read(d, "data/qrels.txt")).unwrap();
    let mut by_query: std::collections::BTreeMap<&str, Vec<(u32, &str)>> = Default::default();
    for line in qrels.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        by_query.entry(f[0]).or_default().push((f[3].parse().unwrap(), f[2]));
    }
    let mut run = String::new();
    for (q, mut docs) in by_query {
        docs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        for (i, (_, doc)) in docs.iter().enumerate() {
            run += &format!("{q} Q0 {doc} {} {} ideal\n", i + 1, 1000 - i);
        }
    }
    std::fs::write(d.join("ideal.txt"), run).unwrap();
    let out = ok(&["eval", "--run", "ideal.txt", "--qrels", "data/qrels.txt"], d);
    assert!(out.contains("nDCG@10     1.0000"), "{out}");
    assert!(out.contains("\"ndcg_at_10\": 1.0"), "{out}");
    assert!(out.contains("\"mrr_at_10\": 1.0"), "{out}");
}

#[test]
fn train_build_search_eval_pipeline() {
    let dir = corpus();
    let d = dir.path();
    let train = [
        "train", "--docs", "data/docs.jsonl", "--queries", "data/queries.jsonl", "--triples",
        "data/triples.jsonl", "--vocab", "2000", "--lr", "5e-4", "--epochs", "3", "--out", "ck.json",
        "--trace", "trace.csv",
    ];
    ok(&train, d);
    let first = read(d, "ck.json");
    ok(&train, d);
    assert_eq!(first, read(d, "ck.json"), "training is deterministic");
    let trace = String::from_utf8(read(d, "trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("epoch,mean_w_d,mean_w_q,t_d,t_q,dlen,qlen"));
    assert_eq!(trace.lines().count(), 4);

    ok(&["build", "--docs", "data/docs.jsonl", "--vocab", "2000", "--checkpoint", "ck.json", "--mode", "ht:auto", "--out", "i.idx"], d);
    ok(
        &[
            "search", "--index", "i.idx", "--queries", "data/queries.jsonl", "--vocab", "2000", "--checkpoint",
            "ck.json", "--t-q", "auto", "--run-out", "run.txt", "--stats-out", "stats.json",
        ],
        d,
    );
    let out = ok(&["eval", "--run", "run.txt", "--qrels", "data/qrels.txt", "--stats", "stats.json"], d);
    assert!(out.contains("MRR@10"));
    let json_start = out.find('{').unwrap();
    let report: serde_json::Value = serde_json::from_str(&out[json_start..]).unwrap();
    let mrr = report["mrr_at_10"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mrr));
    assert_eq!(report["latency"]["n"].as_u64(), Some(30));
    assert!(report["index_bytes"].as_u64().unwrap() > 0);
}

#[test]
fn ablate_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("grid.toml"),
        r#"
        epochs = 2
        [corpus]
        docs = 80
        queries = 10
        vocab = 500
        [[rows]]
        query = "soft"
        doc = "sigmoid"
        [[rows]]
        query = "soft"
        doc = "sigmoid"
        index = "sigmoid"
        "#,
    )
    .unwrap();
    let out = ok(&["ablate", "--config", "grid.toml", "--json-out", "rows.json"], dir.path());
    assert_eq!(out.lines().count(), 3, "{out}");
    assert!(out.contains("S[Q],ĤH[D] K=25"));
    assert!(out.contains("S[Q],Ĥ[D] K=25"));
    let rows: serde_json::Value = serde_json::from_slice(&read(dir.path(), "rows.json")).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let dir = corpus();
    let d = dir.path();
    // usage
    assert_eq!(code(&["frobnicate"], d), 1);
    assert_eq!(code(&["build", "--docs", "data/docs.jsonl", "--mode", "topk:0", "--out", "x"], d), 1);
    assert_eq!(code(&["build", "--docs", "data/docs.jsonl", "--mode", "ht:auto", "--vocab", "2000", "--out", "x"], d), 1);
    assert_eq!(code(&["build", "--docs", "data/docs.jsonl", "--bits", "4", "--out", "x"], d), 1);
    assert_eq!(code(&["search", "--index", "x", "--queries", "q", "--run-out", "r", "--t-q", "-1"], d), 1);
    assert_eq!(code(&["--help"], d), 0);
    // data
    assert_eq!(code(&["build", "--docs", "missing.jsonl", "--out", "x"], d), 2);
    std::fs::write(d.join("bad.idx"), b"not an index").unwrap();
    assert_eq!(
        code(&["search", "--index", "bad.idx", "--queries", "data/queries.jsonl", "--vocab", "2000", "--run-out", "r"], d),
        2
    );
    assert_eq!(code(&["build", "--docs", "data/docs.jsonl", "--vocab", "100", "--out", "x"], d), 2);
    // divergence
    assert_eq!(
        code(
            &[
                "train", "--docs", "data/docs.jsonl", "--queries", "data/queries.jsonl", "--triples",
                "data/triples.jsonl", "--vocab", "2000", "--lr", "1e307", "--epochs", "2", "--out", "ck.json",
            ],
            d
        ),
        3
    );
    assert!(!d.join("ck.json").exists());
}

#[test]
fn error_messages_name_the_problem() {
    let dir = corpus();
    let out = run(&["build", "--docs", "missing.jsonl", "--out", "x"], dir.path());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("missing.jsonl"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}
