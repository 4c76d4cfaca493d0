use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::threshold::reg_l_t;
use crate::vector::{SparseVector, TokenId};

use super::encoder::encode_toy;
use super::{TrainConfig, TrainState, TrainingTriple};

/// Components of the extended objective for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Batch mean of the margin-MSE ranking loss.
    pub l_r: f64,
    pub l_q: f64,
    pub l_d: f64,
    pub l_t: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn compose(cfg: &TrainConfig, l_r: f64, l_q: f64, l_d: f64, l_t: f64) -> Self {
        let th = &cfg.thresholds;
        LossBreakdown {
            l_r,
            l_q,
            l_d,
            l_t,
            total: l_r + th.lambda_q * l_q + th.lambda_d * l_d + th.lambda_t * l_t,
        }
    }
}

/// Training-time score: the configured query-side function on query weights
/// times the document-side function on document weights, summed over the
/// shared support. With the default sides this is `Σ_j S(w_j^q, t_Q) · Ĥ(w_j^d, t_D)`.
pub fn train_rank_score(q_enc: &SparseVector, d_enc: &SparseVector, cfg: &TrainConfig) -> f64 {
    let th = &cfg.thresholds;
    let (a, b) = (q_enc.entries(), d_enc.entries());
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let q = cfg.query_side.value(a[i].1, th.t_q, th.k);
                let d = cfg.doc_side.value(b[j].1, th.t_d, th.k);
                sum += q * d;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

struct EncodedTriple {
    q: SparseVector,
    pos: SparseVector,
    neg: SparseVector,
    teacher_margin: f64,
}

fn encode_batch(batch: &[TrainingTriple], state: &TrainState) -> Vec<EncodedTriple> {
    batch
        .iter()
        .map(|t| EncodedTriple {
            q: encode_toy(&state.params, &t.query_raw),
            pos: encode_toy(&state.params, &t.pos_raw),
            neg: encode_toy(&state.params, &t.neg_raw),
            teacher_margin: t.teacher_margin,
        })
        .collect()
}

/// Margin MSE: batch mean of `((s(q,d⁺) - s(q,d⁻)) - teacher_margin)²`.
pub fn margin_mse(batch: &[TrainingTriple], state: &TrainState, cfg: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cfg = cfg.with_state(state);
    let enc = encode_batch(batch, state);
    Ok(margin_mse_encoded(&enc, &cfg))
}

fn margin_mse_encoded(enc: &[EncodedTriple], cfg: &TrainConfig) -> f64 {
    let sum: f64 = enc
        .iter()
        .map(|t| {
            let r = train_rank_score(&t.q, &t.pos, cfg) - train_rank_score(&t.q, &t.neg, cfg)
                - t.teacher_margin;
            r * r
        })
        .sum();
    sum / enc.len() as f64
}

/// L1 query regularizer `Σ_j (1/|B|) Σ_q w_j^q` on encoder outputs.
pub fn reg_l_q<'a>(queries: impl IntoIterator<Item = &'a SparseVector>) -> Result<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for q in queries {
        n += 1;
        sum += q.weight_sum();
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(sum / n as f64)
}

/// Per-token batch means of document weights, in token order.
pub(crate) fn doc_means<'a>(
    docs: impl IntoIterator<Item = &'a SparseVector>,
) -> (BTreeMap<TokenId, f64>, usize) {
    let mut sums: BTreeMap<TokenId, f64> = BTreeMap::new();
    let mut n = 0usize;
    for d in docs {
        n += 1;
        for (t, w) in d.iter() {
            *sums.entry(t).or_insert(0.0) += w;
        }
    }
    if n > 0 {
        for v in sums.values_mut() {
            *v /= n as f64;
        }
    }
    (sums, n)
}

/// FLOPS document regularizer `Σ_j ((1/N) Σ_d w_j^d)²`.
pub fn reg_l_d<'a>(docs: impl IntoIterator<Item = &'a SparseVector>) -> Result<f64> {
    let (means, n) = doc_means(docs);
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(means.values().map(|m| m * m).sum())
}

/// Full objective `mean L_R + λ_Q L_Q + λ_D L_D + λ_T L_T` for one batch.
///
/// The batch documents are the positive and negative of every triple
/// (`N = 2|B|`); the regularizers see encoder outputs before thresholding.
pub fn loss_total(
    batch: &[TrainingTriple],
    state: &TrainState,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cfg = cfg.with_state(state);
    let enc = encode_batch(batch, state);
    let l_r = margin_mse_encoded(&enc, &cfg);
    let l_q = reg_l_q(enc.iter().map(|t| &t.q))?;
    let l_d = reg_l_d(enc.iter().flat_map(|t| [&t.pos, &t.neg]))?;
    let l_t = reg_l_t(state.t_d, state.t_q);
    Ok(LossBreakdown::compose(&cfg, l_r, l_q, l_d, l_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::{SideThresholding, ThresholdConfig};

    fn sv(id: &str, entries: &[(u32, f64)]) -> SparseVector {
        SparseVector::new(id, entries.iter().map(|&(t, w)| (TokenId(t), w)).collect()).unwrap()
    }

    fn cfg(t_q: f64, t_d: f64, k: f64) -> TrainConfig {
        TrainConfig {
            thresholds: ThresholdConfig { t_d, t_q, k, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn rank_score_examples() {
        let q = sv("q", &[(1, 1.0), (2, 0.3)]);
        let d = sv("d", &[(1, 0.8), (2, 5.0)]);
        assert_eq!(train_rank_score(&q, &d, &cfg(1.0, 0.5, 25.0)), 0.0);

        let q = sv("q", &[(1, 1.0)]);
        let d = sv("d", &[(1, 0.8)]);
        let s = train_rank_score(&q, &d, &cfg(0.4, 0.5, 25.0));
        assert!((s - 0.479_734_666_254).abs() < 1e-6, "{s}");

        let q = sv("q", &[(1, 1.0), (3, 2.0)]);
        let d = sv("d", &[(1, 0.8), (3, 1.5), (4, 2.0)]);
        let s = train_rank_score(&q, &d, &cfg(0.0, 0.5, 1e6));
        assert_eq!(s, crate::vector::dot(&q, &d));
    }

    #[test]
    fn phi_sides_reduce_to_dot() {
        let mut c = cfg(0.7, 0.7, 25.0);
        c.query_side = SideThresholding::Phi;
        c.doc_side = SideThresholding::Phi;
        let q = sv("q", &[(1, 1.0), (3, 0.2)]);
        let d = sv("d", &[(1, 0.5), (3, 0.1)]);
        assert_eq!(train_rank_score(&q, &d, &c), crate::vector::dot(&q, &d));
    }

    #[test]
    fn l_q_examples() {
        assert_eq!(reg_l_q([&sv("q", &[])]).unwrap(), 0.0);
        assert_eq!(reg_l_q([&sv("q", &[(1, 0.5), (2, 0.5)])]).unwrap(), 1.0);
        assert_eq!(reg_l_q([&sv("a", &[(1, 1.0)]), &sv("b", &[])]).unwrap(), 0.5);
        assert!(reg_l_q(std::iter::empty()).is_err());
    }

    #[test]
    fn l_d_examples() {
        assert_eq!(reg_l_d([&sv("d", &[(1, 2.0)])]).unwrap(), 4.0);
        assert_eq!(reg_l_d([&sv("a", &[(1, 1.0)]), &sv("b", &[(1, 3.0)])]).unwrap(), 4.0);
        assert_eq!(reg_l_d([&sv("a", &[(1, 2.0)]), &sv("b", &[(2, 2.0)])]).unwrap(), 2.0);
    }
}
