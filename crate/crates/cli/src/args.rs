use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use htsparse::{Algorithm, SideThresholding, SparsifyMode};

/// Default vocabulary size (BERT WordPiece).
pub const DEFAULT_VOCAB: u32 = 30522;

#[derive(Debug, Parser)]
#[command(name = "htsparse", version, about = "Learned sparse retrieval with trainable thresholds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: docs.jsonl, queries.jsonl, qrels.txt, triples.jsonl.
    Synth(SynthArgs),
    /// Train the toy encoder and thresholds on triples.
    Train(TrainArgs),
    /// Sparsify documents and write an index.
    Build(BuildArgs),
    /// Run queries against an index and write a TREC run.
    Search(SearchArgs),
    /// Score a run against qrels.
    Eval(EvalArgs),
    /// Run a thresholding ablation grid on the synthetic corpus.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub docs: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 5000)]
    pub vocab: u32,
    #[arg(long, default_value_t = 1.1)]
    pub zipf: f64,
    #[arg(long, default_value_t = 20)]
    pub topics: usize,
    #[arg(long, default_value_t = 20)]
    pub triples_per_query: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_side(s: &str) -> Result<SideThresholding, String> {
    SideThresholding::parse(s).ok_or_else(|| format!("`{s}` is not one of phi, soft, sigmoid"))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Raw document features (JSONL).
    #[arg(long)]
    pub docs: PathBuf,
    /// Raw query features (JSONL).
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB)]
    pub vocab: u32,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_q: f64,
    #[arg(long, default_value_t = 0.008)]
    pub lambda_d: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_t: f64,
    /// Steepness K of the sigmoid threshold.
    #[arg(long, default_value_t = 25.0)]
    pub k_steepness: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value = "soft", value_parser = parse_side)]
    pub query_side: SideThresholding,
    #[arg(long, default_value = "sigmoid", value_parser = parse_side)]
    pub doc_side: SideThresholding,
    /// Checkpoint JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch trace CSV to write.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_bits(s: &str) -> Result<u8, String> {
    match s {
        "0" => Ok(0),
        "8" => Ok(8),
        "16" => Ok(16),
        _ => Err(format!("`{s}` is not 0, 8 or 16")),
    }
}

/// `--mode`: a sparsifier, or `ht:auto` for the checkpoint's `t_D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeArg {
    Fixed(SparsifyMode),
    HtAuto,
}

impl FromStr for ModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ht:auto" {
            return Ok(ModeArg::HtAuto);
        }
        let mode: SparsifyMode = s.parse().map_err(|e: htsparse::Error| e.to_string())?;
        mode.validate().map_err(|e| e.to_string())?;
        Ok(ModeArg::Fixed(mode))
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB)]
    pub vocab: u32,
    /// ht:T | ht:auto | topk:K | dcp:F | cut:T | none
    #[arg(long, default_value = "none")]
    pub mode: ModeArg,
    /// Impact bits: 0 (exact), 8 or 16.
    #[arg(long, default_value_t = 8, value_parser = parse_bits)]
    pub bits: u8,
    /// Encode raw documents with this checkpoint's encoder first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// `--t-q`: a value, or `auto` for the checkpoint's `t_Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TqArg {
    Value(f64),
    Auto,
}

impl FromStr for TqArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(TqArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(t) if t.is_finite() && t >= 0.0 => Ok(TqArg::Value(t)),
            _ => Err(format!("`{s}` is not `auto` or a number >= 0")),
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB)]
    pub vocab: u32,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Soft threshold on query weights, or `auto` to take it from --checkpoint.
    #[arg(long, default_value = "0")]
    pub t_q: TqArg,
    /// Encode raw queries with this checkpoint's encoder first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "maxscore", value_parser = |s: &str| s.parse::<Algorithm>().map_err(|e| e.to_string()))]
    pub algo: Algorithm,
    #[arg(long)]
    pub run_out: PathBuf,
    /// Run tag written in the last column.
    #[arg(long, default_value = "htsparse")]
    pub tag: String,
    /// Latency and length statistics as JSON, for `eval --stats`.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Statistics written by `search --stats-out`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Also write the rows as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}
