//! Sparsification and construction of the impact-quantized inverted index.
//!
//! Documents are pruned with a [`SparsifyMode`] (the learned hard threshold
//! or one of the baselines), then grouped into per-token posting lists that
//! carry their exact maximum weight for MaxScore.

mod codec;
mod format;
mod quant;
mod sparsify;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::vector::{Collection, SparseVector, TokenId};

pub use codec::{bitpack, bitunpack, group_varint_decode, group_varint_encode, BLOCK_LEN};
pub use format::{read, read_from, serialized_size, write, write_to, FORMAT_VERSION, MAGIC};
pub use quant::QuantizationSpec;
pub use sparsify::{dcp_keep_count, sparsify, SparsifyMode};

/// One posting as seen by a reader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting {
    pub doc: u32,
    /// Quantized impact; zero in exact mode.
    pub impact: u32,
    /// Scoring weight: the exact weight in exact mode, else the dequantized impact.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostingList {
    token: TokenId,
    docs: Vec<u32>,
    /// Empty in exact mode.
    impacts: Vec<u32>,
    weights: Vec<f64>,
    max_weight: f64,
}

impl PostingList {
    pub fn token(&self) -> TokenId {
        self.token
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Exact maximum weight before quantization; an upper bound on every
    /// scoring weight in the list.
    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    pub fn docs(&self) -> &[u32] {
        &self.docs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn impacts(&self) -> &[u32] {
        &self.impacts
    }

    pub fn get(&self, i: usize) -> Posting {
        Posting {
            doc: self.docs[i],
            impact: self.impacts.get(i).copied().unwrap_or(0),
            weight: self.weights[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Posting> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocEntry {
    pub id: String,
    pub nnz: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub postings: usize,
    pub mean_dlen: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    vocab_size: u32,
    lists: Vec<PostingList>,
    docs: Vec<DocEntry>,
    quant: QuantizationSpec,
}

impl InvertedIndex {
    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn quant(&self) -> QuantizationSpec {
        self.quant
    }

    /// Posting lists in ascending token order.
    pub fn lists(&self) -> &[PostingList] {
        &self.lists
    }

    pub fn list(&self, token: TokenId) -> Option<&PostingList> {
        self.lists
            .binary_search_by_key(&token, |l| l.token)
            .ok()
            .map(|i| &self.lists[i])
    }

    pub fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.docs[ordinal as usize].id
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn postings(&self) -> usize {
        self.lists.iter().map(PostingList::len).sum()
    }

    pub fn mean_dlen(&self) -> f64 {
        if self.docs.is_empty() {
            return 0.0;
        }
        self.docs.iter().map(|d| d.nnz as u64).sum::<u64>() as f64 / self.docs.len() as f64
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            doc_count: self.doc_count(),
            postings: self.postings(),
            mean_dlen: self.mean_dlen(),
            bytes: serialized_size(self),
        }
    }

    /// Assembles an index from parts, checking every structural invariant.
    pub(crate) fn from_parts(
        vocab_size: u32,
        lists: Vec<PostingList>,
        docs: Vec<DocEntry>,
        quant: QuantizationSpec,
    ) -> Result<Self> {
        let corrupt = |m: String| Err(Error::Corrupt(m));
        let mut per_doc = vec![0u32; docs.len()];
        for pair in lists.windows(2) {
            if pair[0].token >= pair[1].token {
                return corrupt(format!("list tokens out of order at {}", pair[1].token));
            }
        }
        for list in &lists {
            if list.token.0 >= vocab_size {
                return corrupt(format!("token {} outside vocabulary", list.token));
            }
            if list.docs.is_empty() {
                return corrupt(format!("empty posting list for token {}", list.token));
            }
            if list.docs.windows(2).any(|p| p[0] >= p[1]) {
                return corrupt(format!("doc ordinals not increasing in list {}", list.token));
            }
            for &d in &list.docs {
                match per_doc.get_mut(d as usize) {
                    Some(c) => *c += 1,
                    None => return corrupt(format!("doc ordinal {d} out of range")),
                }
            }
            if list.weights.iter().any(|&w| !(w >= 0.0 && w <= list.max_weight)) {
                return corrupt(format!("weight above list maximum in list {}", list.token));
            }
            if !(list.max_weight.is_finite() && list.max_weight <= quant.global_max) {
                return corrupt(format!("bad max weight in list {}", list.token));
            }
        }
        for (d, (entry, &count)) in docs.iter().zip(&per_doc).enumerate() {
            if entry.nnz != count {
                return corrupt(format!(
                    "doc {d} nnz {} but {count} postings reference it",
                    entry.nnz
                ));
            }
        }
        Ok(InvertedIndex {
            vocab_size,
            lists,
            docs,
            quant,
        })
    }
}

/// Sparsifies every document and builds the index.
///
/// Sparsification fans out over the rayon pool; postings are merged in
/// ordinal order, so the result does not depend on the degree of parallelism.
/// Documents left empty are kept in the doc table with `nnz = 0`.
pub fn build(collection: &Collection, mode: SparsifyMode, bits: u8) -> Result<InvertedIndex> {
    mode.validate()?;
    let pruned: Vec<SparseVector> = collection
        .vectors()
        .par_iter()
        .map(|v| sparsify(v, mode))
        .collect();
    build_from_sparsified(collection.vocab_size(), &pruned, bits)
}

/// Builds from vectors that are already in their final indexed form.
pub fn build_from_sparsified(
    vocab_size: u32,
    vectors: &[SparseVector],
    bits: u8,
) -> Result<InvertedIndex> {
    if vectors.len() > u32::MAX as usize {
        return Err(Error::InvalidParameter("too many documents".into()));
    }
    let global_max = vectors.iter().map(SparseVector::max_weight).fold(0.0, f64::max);
    if global_max <= 0.0 {
        return Err(Error::EmptyIndex);
    }
    let quant = QuantizationSpec::new(bits, global_max)?;

    let mut buckets: Vec<Vec<(u32, f64)>> = vec![Vec::new(); vocab_size as usize];
    let mut docs = Vec::with_capacity(vectors.len());
    for (ordinal, v) in vectors.iter().enumerate() {
        for (t, w) in v.iter() {
            let bucket = buckets.get_mut(t.index()).ok_or_else(|| Error::InvalidVector {
                id: v.id().to_owned(),
                reason: format!("token {t} outside vocabulary of size {vocab_size}"),
            })?;
            bucket.push((ordinal as u32, w));
        }
        docs.push(DocEntry {
            id: v.id().to_owned(),
            nnz: v.len() as u32,
        });
    }

    let mut lists = Vec::new();
    for (token, bucket) in buckets.into_iter().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        let max_weight = bucket.iter().map(|&(_, w)| w).fold(0.0, f64::max);
        let docs: Vec<u32> = bucket.iter().map(|&(d, _)| d).collect();
        let (impacts, weights) = if quant.is_exact() {
            (Vec::new(), bucket.iter().map(|&(_, w)| w).collect())
        } else {
            let impacts: Vec<u32> = bucket
                .iter()
                .map(|&(_, w)| quant.quantize(w))
                .collect::<Result<_>>()?;
            let weights = impacts.iter().map(|&q| quant.dequantize(q)).collect();
            (impacts, weights)
        };
        lists.push(PostingList {
            token: TokenId(token as u32),
            docs,
            impacts,
            weights,
            max_weight,
        });
    }
    InvertedIndex::from_parts(vocab_size, lists, docs, quant)
}
