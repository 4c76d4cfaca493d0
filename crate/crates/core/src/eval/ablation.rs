//! Thresholding ablation grid on the synthetic corpus.
//!
//! Each row trains a model with a choice of query-side and document-side
//! thresholding, steepness `K` and regularizers, then indexes and searches
//! the corpus with the learned thresholds. Rows sharing a training setup
//! share one trained model.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{build, SparsifyMode};
use crate::search::{batch_search_prepared, prepare_query, Algorithm, PreparedQuery, Run};
use crate::threshold::{apply_thresholding, SideThresholding, ThresholdConfig, ThresholdFn};
use crate::train::{encode_collection, resolve_triples, train, TrainConfig, TrainOptions, TrainState};
use crate::vector::{Collection, SparseVector};

use super::{mrr_at_k, ndcg_at_k, synth_corpus, SynthConfig};

/// Regularizers removed from the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Dropped {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "l_q")]
    LQ,
    #[serde(rename = "l_q+l_d")]
    LQLD,
}

impl Dropped {
    fn label(self) -> &'static str {
        match self {
            Dropped::None => "",
            Dropped::LQ => " w/o L_Q",
            Dropped::LQLD => " w/o L_Q,L_D",
        }
    }
}

/// What the index stores for a sigmoid-trained document side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocIndex {
    /// Exact hard threshold at `t_D`.
    #[default]
    Hard,
    /// The sigmoid surrogate itself; weights below one quantization step
    /// are dropped since they would be stored as zero impacts.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRowSpec {
    pub query: SideThresholding,
    pub doc: SideThresholding,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub drop: Dropped,
    #[serde(default)]
    pub index: DocIndex,
}

fn default_k() -> f64 {
    25.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub corpus: SynthConfig,
    pub lambda_t: f64,
    pub lambda_q: f64,
    pub lambda_d: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub bits: u8,
    /// Cutoff for both the search and the metrics.
    pub cutoff: usize,
    pub rows: Vec<AblationRowSpec>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let t = ThresholdConfig::default();
        AblationConfig {
            corpus: SynthConfig::default(),
            lambda_t: 1.0,
            lambda_q: t.lambda_q,
            lambda_d: t.lambda_d,
            epochs: 20,
            lr: 5e-4,
            batch_size: 32,
            seed: 42,
            bits: 8,
            cutoff: 10,
            rows: Vec::new(),
        }
    }
}

impl AblationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AblationConfig =
            toml::from_str(text).map_err(|e| Error::parse("ablation config", e.message().to_owned()))?;
        if cfg.rows.is_empty() {
            return Err(Error::InvalidParameter("ablation config has no [[rows]]".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub spec: AblationRowSpec,
    pub t_d: f64,
    pub t_q: f64,
    pub qlen: f64,
    pub dlen: f64,
    pub postings: usize,
    pub mrr: f64,
    pub ndcg: f64,
}

fn side_name(s: SideThresholding, index: DocIndex) -> &'static str {
    match (s, index) {
        (SideThresholding::Phi, _) => "phi",
        (SideThresholding::Soft, _) => "S",
        (SideThresholding::Sigmoid, DocIndex::Hard) => "ĤH",
        (SideThresholding::Sigmoid, DocIndex::Sigmoid) => "Ĥ",
    }
}

impl AblationRowSpec {
    pub fn label(&self) -> String {
        format!(
            "{}[Q],{}[D] K={}{}",
            side_name(self.query, DocIndex::Hard),
            side_name(self.doc, self.index),
            self.k,
            self.drop.label()
        )
    }
}

#[derive(PartialEq, Eq, Hash)]
struct ModelKey(SideThresholding, SideThresholding, u64, Dropped);

fn query_at_inference(v: &SparseVector, side: SideThresholding, t_q: f64) -> PreparedQuery {
    match side {
        SideThresholding::Phi => prepare_query(v, 0.0),
        SideThresholding::Soft => prepare_query(v, t_q),
        SideThresholding::Sigmoid => {
            PreparedQuery::from_vector(&apply_thresholding(v, ThresholdFn::Hard, t_q))
        }
    }
}

fn docs_at_index(
    docs: &Collection,
    spec: &AblationRowSpec,
    t_d: f64,
    bits: u8,
) -> Result<Collection> {
    let f = match (spec.doc, spec.index) {
        (SideThresholding::Phi, _) => return Ok(docs.clone()),
        (SideThresholding::Soft, _) => ThresholdFn::Soft,
        (SideThresholding::Sigmoid, DocIndex::Hard) => ThresholdFn::Hard,
        (SideThresholding::Sigmoid, DocIndex::Sigmoid) => ThresholdFn::Sigmoid { k: spec.k },
    };
    let out = docs.map(|v| apply_thresholding(v, f, t_d));
    if spec.index == DocIndex::Sigmoid && bits > 0 {
        let global_max = out.vectors().iter().map(SparseVector::max_weight).fold(0.0, f64::max);
        let step = global_max / ((1u64 << bits) - 1) as f64;
        return Ok(out.map(|v| v.filter(|_, w| w >= step)));
    }
    Ok(out)
}

/// Runs every row of `cfg`; `progress` is called after each row.
pub fn run_ablation(
    cfg: &AblationConfig,
    mut progress: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let corpus = synth_corpus(&cfg.corpus)?;
    let triples = resolve_triples(&corpus.docs, &corpus.queries, &corpus.triples)?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let mut models: HashMap<ModelKey, TrainState> = HashMap::new();
    let mut rows = Vec::with_capacity(cfg.rows.len());

    for spec in &cfg.rows {
        let key = ModelKey(spec.query, spec.doc, spec.k.to_bits(), spec.drop);
        let state = match models.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let thresholds = ThresholdConfig {
                    k: spec.k,
                    lambda_t: cfg.lambda_t,
                    lambda_q: if spec.drop == Dropped::None { cfg.lambda_q } else { 0.0 },
                    lambda_d: if spec.drop == Dropped::LQLD { 0.0 } else { cfg.lambda_d },
                    ..ThresholdConfig::default()
                };
                let tcfg = TrainConfig {
                    thresholds,
                    query_side: spec.query,
                    doc_side: spec.doc,
                };
                e.insert(train(&corpus.docs, &corpus.queries, &triples, &tcfg, &opts)?.0)
            }
        };

        let docs = encode_collection(&state.params, &corpus.docs);
        let indexed = docs_at_index(&docs, spec, state.t_d, cfg.bits)?;
        let index = build(&indexed, SparsifyMode::None, cfg.bits)?;
        let queries: Vec<PreparedQuery> = encode_collection(&state.params, &corpus.queries)
            .vectors()
            .iter()
            .map(|q| query_at_inference(q, spec.query, state.t_q))
            .collect();
        let qlen = queries.iter().map(|q| q.terms().len()).sum::<usize>() as f64
            / queries.len().max(1) as f64;
        let (results, _) = batch_search_prepared(&index, &queries, cfg.cutoff, Algorithm::MaxScore)?;
        let mut run = Run::new();
        for (q, r) in queries.iter().zip(&results) {
            run.push_result(q.id(), r);
        }
        let row = AblationRow {
            label: spec.label(),
            spec: *spec,
            t_d: state.t_d,
            t_q: state.t_q,
            qlen,
            dlen: index.mean_dlen(),
            postings: index.postings(),
            mrr: mrr_at_k(&run, &corpus.qrels, cfg.cutoff)?,
            ndcg: ndcg_at_k(&run, &corpus.qrels, cfg.cutoff)?,
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:width$}  {:>7} {:>7} {:>6} {:>7} {:>8} {:>7} {:>7}\n",
        "config", "t_D", "t_Q", "Qlen", "Dlen", "postings", "MRR", "nDCG"
    );
    for r in rows {
        let pad = width - r.label.chars().count();
        let _ = writeln!(
            out,
            "{}{}  {:>7.4} {:>7.4} {:>6.2} {:>7.2} {:>8} {:>7.4} {:>7.4}",
            r.label,
            " ".repeat(pad),
            r.t_d,
            r.t_q,
            r.qlen,
            r.dlen,
            r.postings,
            r.mrr,
            r.ndcg
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_with_defaults() {
        let cfg = AblationConfig::from_toml(
            r#"
            epochs = 2
            [corpus]
            docs = 50
            [[rows]]
            query = "soft"
            doc = "sigmoid"
            [[rows]]
            query = "soft"
            doc = "sigmoid"
            k = 2.5
            index = "sigmoid"
            drop = "l_q+l_d"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.corpus.docs, 50);
        assert_eq!(cfg.corpus.queries, 100);
        assert_eq!(cfg.rows[0].k, 25.0);
        assert_eq!(cfg.rows[0].drop, Dropped::None);
        assert_eq!(cfg.rows[1].index, DocIndex::Sigmoid);
        assert_eq!(cfg.rows[1].drop, Dropped::LQLD);
        assert_eq!(cfg.rows[1].label(), "S[Q],Ĥ[D] K=2.5 w/o L_Q,L_D");
    }

    #[test]
    fn rejects_unknown_keys_and_empty_grids() {
        assert!(AblationConfig::from_toml("epochs = 3\n").is_err());
        assert!(AblationConfig::from_toml("epoch = 3\n[[rows]]\nquery='soft'\ndoc='phi'\n").is_err());
    }

    #[test]
    fn small_grid_runs() {
        let cfg = AblationConfig {
            corpus: SynthConfig { docs: 60, queries: 8, vocab: 400, ..Default::default() },
            epochs: 2,
            rows: vec![
                AblationRowSpec { query: SideThresholding::Soft, doc: SideThresholding::Sigmoid, k: 25.0, drop: Dropped::None, index: DocIndex::Hard },
                AblationRowSpec { query: SideThresholding::Soft, doc: SideThresholding::Sigmoid, k: 25.0, drop: Dropped::None, index: DocIndex::Sigmoid },
            ],
            ..Default::default()
        };
        let mut seen = 0;
        let rows = run_ablation(&cfg, |_| seen += 1).unwrap();
        assert_eq!(seen, 2);
        // same trained model for both rows
        assert_eq!(rows[0].t_d, rows[1].t_d);
        assert!(rows[0].postings <= rows[1].postings);
        assert!(ablation_table(&rows).lines().count() == 3);
    }
}
