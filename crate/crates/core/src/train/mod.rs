//! Desk-scale joint training of the document/query thresholds and a toy
//! per-token encoder under the extended ranking + sparsity objective.
//!
//! The training path scores `S`-thresholded query weights against
//! `Ĥ`-thresholded document weights (configurable per side for ablations);
//! the learned `t_D` is later applied with the exact hard threshold when the
//! index is built.

mod encoder;
mod grad;
pub mod io;
mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::threshold::{SideThresholding, ThresholdConfig};
use crate::vector::{Collection, SparseVector};

pub use encoder::{encode_collection, encode_toy, ToyEncoderParams};
pub use grad::{grad_analytic, loss_and_grad, sgd_step, Gradients};
pub use loss::{loss_total, margin_mse, reg_l_d, reg_l_q, train_rank_score, LossBreakdown};

/// Loss weights, thresholds, and which thresholding function each side uses
/// during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub thresholds: ThresholdConfig,
    pub query_side: SideThresholding,
    pub doc_side: SideThresholding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            thresholds: ThresholdConfig::default(),
            query_side: SideThresholding::Soft,
            doc_side: SideThresholding::Sigmoid,
        }
    }
}

impl TrainConfig {
    /// Copy of this config carrying the state's current thresholds.
    pub fn with_state(&self, state: &TrainState) -> TrainConfig {
        let mut cfg = *self;
        cfg.thresholds.t_d = state.t_d;
        cfg.thresholds.t_q = state.t_q;
        cfg
    }
}

/// A query with one positive and one negative document and the teacher's
/// score margin between them. Vectors hold raw encoder input features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriple {
    pub query_raw: SparseVector,
    pub pos_raw: SparseVector,
    pub neg_raw: SparseVector,
    pub teacher_margin: f64,
}

impl TrainingTriple {
    pub fn new(
        query_raw: SparseVector,
        pos_raw: SparseVector,
        neg_raw: SparseVector,
        teacher_margin: f64,
    ) -> Result<Self> {
        if !teacher_margin.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "teacher margin must be finite, got {teacher_margin}"
            )));
        }
        if pos_raw.id() == neg_raw.id() {
            return Err(Error::InvalidParameter(format!(
                "positive and negative share id `{}`",
                pos_raw.id()
            )));
        }
        Ok(TrainingTriple {
            query_raw,
            pos_raw,
            neg_raw,
            teacher_margin,
        })
    }
}

/// Triple as stored on disk: ids into the query and document collections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRef {
    pub q: String,
    pub pos: String,
    pub neg: String,
    pub teacher_margin: f64,
}

/// Looks up every id of `refs` in the collections.
pub fn resolve_triples(
    docs: &Collection,
    queries: &Collection,
    refs: &[TripleRef],
) -> Result<Vec<TrainingTriple>> {
    refs.iter()
        .map(|r| {
            let q = queries.get(&r.q).ok_or_else(|| Error::UnknownId(r.q.clone()))?;
            let pos = docs.get(&r.pos).ok_or_else(|| Error::UnknownId(r.pos.clone()))?;
            let neg = docs.get(&r.neg).ok_or_else(|| Error::UnknownId(r.neg.clone()))?;
            TrainingTriple::new(q.clone(), pos.clone(), neg.clone(), r.teacher_margin)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: ToyEncoderParams,
    pub t_d: f64,
    pub t_q: f64,
    pub step: u64,
    pub rng_seed: u64,
}

impl TrainState {
    /// Fresh state: identity-like encoder and both thresholds at zero.
    pub fn new(vocab_size: u32, rng_seed: u64) -> Self {
        TrainState {
            params: ToyEncoderParams::new(vocab_size),
            t_d: 0.0,
            t_q: 0.0,
            step: 0,
            rng_seed,
        }
    }
}

/// Collection-level statistics after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Mean non-zero encoded document weight.
    pub mean_doc_weight: f64,
    pub mean_query_weight: f64,
    pub t_d: f64,
    pub t_q: f64,
    /// Mean count of document weights surviving index-time thresholding.
    pub mean_dlen: f64,
    pub mean_qlen: f64,
    /// Mean total loss over the epoch's batches.
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            lr: 1e-2,
            batch_size: 32,
            seed: 42,
        }
    }
}

/// Mean non-zero weight and mean count of weights surviving `side` at `t`.
pub fn sparsity_stats(
    params: &ToyEncoderParams,
    raw: &Collection,
    side: SideThresholding,
    t: f64,
) -> (f64, f64) {
    let mut weight_sum = 0.0;
    let mut weight_count = 0usize;
    let mut kept = 0usize;
    for v in raw.vectors() {
        let enc = encode_toy(params, v);
        weight_sum += enc.weight_sum();
        weight_count += enc.len();
        kept += enc.iter().filter(|&(_, w)| side.survives(w, t)).count();
    }
    let n = raw.len().max(1) as f64;
    let mean_w = if weight_count == 0 {
        0.0
    } else {
        weight_sum / weight_count as f64
    };
    (mean_w, kept as f64 / n)
}

fn trace(
    epoch: usize,
    state: &TrainState,
    docs: &Collection,
    queries: &Collection,
    cfg: &TrainConfig,
    mean_loss: f64,
) -> EpochTrace {
    let (mean_doc_weight, mean_dlen) = sparsity_stats(&state.params, docs, cfg.doc_side, state.t_d);
    let (mean_query_weight, mean_qlen) =
        sparsity_stats(&state.params, queries, cfg.query_side, state.t_q);
    EpochTrace {
        epoch,
        mean_doc_weight,
        mean_query_weight,
        t_d: state.t_d,
        t_q: state.t_q,
        mean_dlen,
        mean_qlen,
        mean_loss,
    }
}

/// Mini-batch SGD over `triples` for `opts.epochs` epochs.
///
/// Triple order is reshuffled every epoch from a ChaCha stream seeded with
/// `opts.seed`; identical inputs give bit-identical states and traces.
pub fn train(
    docs: &Collection,
    queries: &Collection,
    triples: &[TrainingTriple],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(TrainState, Vec<EpochTrace>)> {
    let initial = TrainState::new(docs.vocab_size().max(queries.vocab_size()), opts.seed);
    train_from(initial, docs, queries, triples, cfg, opts)
}

/// As [`train`], continuing from an existing state.
pub fn train_from(
    mut state: TrainState,
    docs: &Collection,
    queries: &Collection,
    triples: &[TrainingTriple],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(TrainState, Vec<EpochTrace>)> {
    cfg.thresholds.validate()?;
    state.params.validate()?;
    if triples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut traces = Vec::with_capacity(opts.epochs);
    let mut batch = Vec::with_capacity(opts.batch_size);

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(opts.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| triples[i].clone()));
            let (loss, grads) = loss_and_grad(&batch, &state, cfg)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became {} at epoch {epoch}, step {}",
                    loss.total, state.step
                )));
            }
            state = sgd_step(&state, &grads, opts.lr)?;
            loss_sum += loss.total;
            batches += 1;
        }
        traces.push(trace(epoch, &state, docs, queries, cfg, loss_sum / batches as f64));
    }
    Ok((state, traces))
}
