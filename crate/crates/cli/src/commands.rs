use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use htsparse::eval::ablation::{ablation_table, run_ablation, AblationConfig};
use htsparse::eval::{read_qrels, synth_corpus, write_qrels, EvalReport};
use htsparse::index::{self, build};
use htsparse::search::{batch_search_prepared, prepare_query, read_run, write_run, PreparedQuery};
use htsparse::train::io::{read_triples, write_trace, write_triples, Checkpoint};
use htsparse::train::{encode_collection, resolve_triples, train, TrainConfig, TrainOptions};
use htsparse::vector::{load_collection, write_vectors};
use htsparse::{atomic_write, Collection, LatencyStats, SynthConfig, ThresholdConfig};

use crate::args::{
    AblateArgs, BuildArgs, Cli, Command, EvalArgs, ModeArg, SearchArgs, SynthArgs, TqArg, TrainArgs,
};
use crate::{Context, Failure};

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Build(a) => build_cmd(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    }
}

/// Atomically writes `path` with a writer that may fail with a library error.
fn write_file(
    path: &Path,
    f: impl FnOnce(&mut dyn Write) -> htsparse::Result<()>,
) -> Result<(), Failure> {
    let mut inner = None;
    let res = atomic_write(path, |w| {
        f(w).map_err(|e| {
            inner = Some(e);
            std::io::Error::other("write failed")
        })
    });
    match (res, inner) {
        (_, Some(e)) => Err(e).context(format!("writing {}", path.display())),
        (r, None) => r.context(format!("writing {}", path.display())),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .context(format!("opening {}", path.display()))
}

fn load(path: &Path, vocab: u32) -> Result<Collection, Failure> {
    load_collection(path, vocab).context(format!("loading {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).context("loading checkpoint")
}

/// Runs raw features through the checkpoint's encoder.
fn encode(ckpt: &Checkpoint, raw: &Collection, what: &Path) -> Result<Collection, Failure> {
    if raw.vocab_size() as usize > ckpt.params.vocab_size() {
        return Err(Failure::Data(format!(
            "{}: --vocab {} exceeds the checkpoint's encoder vocabulary {}; pass the --vocab used for training",
            what.display(),
            raw.vocab_size(),
            ckpt.params.vocab_size()
        )));
    }
    Ok(encode_collection(&ckpt.params, raw))
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        seed: a.seed,
        docs: a.docs,
        queries: a.queries,
        vocab: a.vocab,
        zipf: a.zipf,
        topics: a.topics,
        triples_per_query: a.triples_per_query,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = synth_corpus(&cfg).context("generating corpus")?;
    std::fs::create_dir_all(&a.out_dir).context(format!("creating {}", a.out_dir.display()))?;
    let dir = &a.out_dir;
    write_file(&dir.join("docs.jsonl"), |w| write_vectors(w, corpus.docs.vectors()))?;
    write_file(&dir.join("queries.jsonl"), |w| write_vectors(w, corpus.queries.vectors()))?;
    write_file(&dir.join("qrels.txt"), |w| Ok(write_qrels(w, &corpus.qrels)?))?;
    write_file(&dir.join("triples.jsonl"), |w| write_triples(w, &corpus.triples))?;
    eprintln!(
        "wrote {} docs, {} queries, {} triples to {}",
        corpus.docs.len(),
        corpus.queries.len(),
        corpus.triples.len(),
        dir.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let cfg = TrainConfig {
        thresholds: ThresholdConfig {
            k: a.k_steepness,
            lambda_q: a.lambda_q,
            lambda_d: a.lambda_d,
            lambda_t: a.lambda_t,
            ..ThresholdConfig::default()
        },
        query_side: a.query_side,
        doc_side: a.doc_side,
    };
    cfg.thresholds.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if !(a.lr.is_finite() && a.lr > 0.0) || a.batch_size == 0 {
        return Err(Failure::Usage("--lr must be > 0 and --batch-size >= 1".into()));
    }
    let docs = load(&a.docs, a.vocab)?;
    let queries = load(&a.queries, a.vocab)?;
    let refs = read_triples(open(&a.triples)?, &a.triples.display().to_string()).context("reading triples")?;
    let triples = resolve_triples(&docs, &queries, &refs).context(format!("resolving {}", a.triples.display()))?;
    let opts = TrainOptions {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let (state, traces) = train(&docs, &queries, &triples, &cfg, &opts).context("training")?;
    for t in &traces {
        eprintln!(
            "epoch {:3}  loss {:.4}  t_D {:.4}  t_Q {:.4}  Dlen {:.2}  Qlen {:.2}",
            t.epoch, t.mean_loss, t.t_d, t.t_q, t.mean_dlen, t.mean_qlen
        );
    }
    Checkpoint::new(&state, &cfg.with_state(&state))
        .save(&a.out)
        .context(format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.trace {
        write_file(path, |w| write_trace(w, &traces))?;
    }
    println!("t_D {:.6} t_Q {:.6} steps {}", state.t_d, state.t_q, state.step);
    Ok(())
}

fn build_cmd(a: BuildArgs) -> Result<(), Failure> {
    let ckpt = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let mode = match (a.mode, &ckpt) {
        (ModeArg::Fixed(m), _) => m,
        (ModeArg::HtAuto, Some(c)) => htsparse::SparsifyMode::Ht(c.t_d),
        (ModeArg::HtAuto, None) => {
            return Err(Failure::Usage("--mode ht:auto needs --checkpoint to read t_D from".into()))
        }
    };
    let raw = load(&a.docs, a.vocab)?;
    let docs = match &ckpt {
        Some(c) => encode(c, &raw, &a.docs)?,
        None => raw,
    };
    let idx = build(&docs, mode, a.bits).context(format!("building index with {mode}"))?;
    index::write(&idx, &a.out).context(format!("writing {}", a.out.display()))?;
    let stats = idx.stats();
    println!(
        "mode {mode} bits {} docs {} postings {} Dlen {:.2} bytes {}",
        a.bits, stats.doc_count, stats.postings, stats.mean_dlen, stats.bytes
    );
    Ok(())
}

/// What `search` measured, for `eval --stats`.
#[derive(Debug, Serialize, Deserialize)]
struct SearchStats {
    latency: LatencyStats,
    mean_qlen: f64,
    mean_dlen: f64,
    index_bytes: u64,
    postings_scored: u64,
}

fn search(a: SearchArgs) -> Result<(), Failure> {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be >= 1".into()));
    }
    let ckpt = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let t_q = match (a.t_q, &ckpt) {
        (TqArg::Value(t), _) => t,
        (TqArg::Auto, Some(c)) => c.t_q,
        (TqArg::Auto, None) => {
            return Err(Failure::Usage("--t-q auto needs --checkpoint to read t_Q from".into()))
        }
    };
    let idx = index::read(&a.index).context(format!("reading {}", a.index.display()))?;
    let raw = load(&a.queries, a.vocab)?;
    let queries = match &ckpt {
        Some(c) => encode(c, &raw, &a.queries)?,
        None => raw,
    };
    let prepared: Vec<PreparedQuery> = queries.vectors().iter().map(|q| prepare_query(q, t_q)).collect();
    let (results, latency) = batch_search_prepared(&idx, &prepared, a.k, a.algo).context("searching")?;
    write_file(&a.run_out, |w| {
        Ok(write_run(w, prepared.iter().map(|q| q.id()).zip(&results), &a.tag)?)
    })?;
    let stats = SearchStats {
        latency,
        mean_qlen: prepared.iter().map(|q| q.terms().len()).sum::<usize>() as f64
            / prepared.len().max(1) as f64,
        mean_dlen: idx.mean_dlen(),
        index_bytes: std::fs::metadata(&a.index).map(|m| m.len()).unwrap_or(0),
        postings_scored: results.iter().map(|r| r.postings_scored).sum(),
    };
    eprintln!(
        "{} queries  {}  MRT {:.3} ms  P99 {:.3} ms  postings scored {}",
        prepared.len(),
        a.algo,
        latency.mean_ms,
        latency.p99_ms,
        stats.postings_scored
    );
    if let Some(path) = &a.stats_out {
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &stats).map_err(std::io::Error::from)?;
            Ok(w.write_all(b"\n")?)
        })?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be >= 1".into()));
    }
    let run = read_run(open(&a.run)?, &a.run.display().to_string()).context("reading run")?;
    let qrels = read_qrels(open(&a.qrels)?, &a.qrels.display().to_string()).context("reading qrels")?;
    let mut report = EvalReport::from_run(&run, &qrels, a.k).context("evaluating")?;
    if let Some(path) = &a.stats {
        let text = std::fs::read_to_string(path).context(format!("reading {}", path.display()))?;
        let s: SearchStats = serde_json::from_str(&text)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        report.latency = s.latency;
        report.mean_qlen = s.mean_qlen;
        report.mean_dlen = s.mean_dlen;
        report.index_bytes = s.index_bytes;
    }
    print!("{}", report.to_table());
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.config).context(format!("reading {}", a.config.display()))?;
    let cfg = AblationConfig::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
    let rows = run_ablation(&cfg, |r| eprintln!("done: {}", r.label)).context("ablation")?;
    print!("{}", ablation_table(&rows));
    if let Some(path) = &a.json_out {
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &rows).map_err(std::io::Error::from)?;
            Ok(w.write_all(b"\n")?)
        })?;
    }
    Ok(())
}
