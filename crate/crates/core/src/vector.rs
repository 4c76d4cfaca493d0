//! Sparse token-weight vectors, saturation pooling and the dot-product rank
//! score shared by every other module.
//!
//! A [`SparseVector`] is identified with its support: entries are kept sorted
//! by token id, weights are non-negative and exact zeros are never stored.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the BERT WordPiece vocabulary, the default token space.
pub const DEFAULT_VOCAB_SIZE: u32 = 30522;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

/// A document or query in vocabulary space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    id: String,
    entries: Vec<(TokenId, f64)>,
}

impl SparseVector {
    /// Builds a vector from entries already sorted by token id.
    ///
    /// Exact zeros are dropped. Unsorted or duplicate tokens, negative weights
    /// and non-finite weights are rejected.
    pub fn new(id: impl Into<String>, entries: Vec<(TokenId, f64)>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidVector {
            id: id.clone(),
            reason,
        };
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(invalid(format!(
                    "tokens not strictly increasing at {} -> {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for &(token, w) in &entries {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("token {token} has invalid weight {w}")));
            }
        }
        let mut entries = entries;
        entries.retain(|&(_, w)| w > 0.0);
        Ok(SparseVector { id, entries })
    }

    /// Sorts the entries first; duplicate tokens are still an error.
    pub fn from_unsorted(
        id: impl Into<String>,
        entries: impl IntoIterator<Item = (TokenId, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<_> = entries.into_iter().collect();
        entries.sort_by_key(|&(t, _)| t);
        Self::new(id, entries)
    }

    pub fn empty(id: impl Into<String>) -> Self {
        SparseVector {
            id: id.into(),
            entries: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: TokenId) -> Option<f64> {
        self.entries
            .binary_search_by_key(&token, |&(t, _)| t)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn max_weight(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).fold(0.0, f64::max)
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    /// Applies `f` to every weight, dropping entries that map to zero.
    ///
    /// `f` must return non-negative finite values for non-negative input.
    pub fn map_weights(&self, mut f: impl FnMut(TokenId, f64) -> f64) -> SparseVector {
        let entries = self
            .entries
            .iter()
            .filter_map(|&(t, w)| {
                let v = f(t, w);
                debug_assert!(v.is_finite() && v >= 0.0, "mapped weight {v} for token {t}");
                (v > 0.0).then_some((t, v))
            })
            .collect();
        SparseVector {
            id: self.id.clone(),
            entries,
        }
    }

    /// Keeps the subset of entries selected by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(TokenId, f64) -> bool) -> SparseVector {
        SparseVector {
            id: self.id.clone(),
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|&(t, w)| keep(t, w))
                .collect(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Caller guarantees the sparse vector invariants.
    pub(crate) fn from_parts_unchecked(id: String, entries: Vec<(TokenId, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|p| p[0].0 < p[1].0));
        debug_assert!(entries.iter().all(|&(_, w)| w > 0.0 && w.is_finite()));
        SparseVector { id, entries }
    }
}

/// Rank score `R(q, d) = Σ_j w_j^q · w_j^d`, merged over the sorted supports.
pub fn dot(q: &SparseVector, d: &SparseVector) -> f64 {
    let (a, b) = (q.entries(), d.entries());
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Number of non-zero weights (Dlen for a document, Qlen for a query).
pub fn nnz(v: &SparseVector) -> usize {
    v.entries().iter().filter(|&&(_, w)| w > 0.0).count()
}

/// Per-position token scores for one input, as produced by an encoder head.
/// Scores may be negative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenScoreMatrix {
    rows: Vec<Vec<(TokenId, f64)>>,
}

impl TokenScoreMatrix {
    pub fn new(rows: Vec<Vec<(TokenId, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|mut row| {
                row.sort_by_key(|&(t, _)| t);
                row
            })
            .collect();
        TokenScoreMatrix { rows }
    }

    pub fn positions(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(TokenId, f64)>] {
        &self.rows
    }
}

/// `w_j = max_i log(1 + ReLU(w_ij))`, keeping only tokens with a positive
/// pooled weight.
pub fn saturate_maxpool(id: impl Into<String>, m: &TokenScoreMatrix) -> Result<SparseVector> {
    if m.positions() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut pooled: Vec<(TokenId, f64)> = m
        .rows()
        .iter()
        .flatten()
        .map(|&(t, s)| (t, s.max(0.0).ln_1p()))
        .collect();
    pooled.sort_by_key(|&(t, _)| t);
    let mut entries: Vec<(TokenId, f64)> = Vec::with_capacity(pooled.len());
    for (t, w) in pooled {
        match entries.last_mut() {
            Some(last) if last.0 == t => last.1 = last.1.max(w),
            _ => entries.push((t, w)),
        }
    }
    entries.retain(|&(_, w)| w > 0.0);
    SparseVector::new(id, entries)
}

/// A set of vectors over a shared vocabulary with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Collection {
    vectors: Vec<SparseVector>,
    vocab_size: u32,
    by_id: HashMap<String, usize>,
}

impl Collection {
    pub fn new(vectors: Vec<SparseVector>, vocab_size: u32) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(vectors.len());
        for (pos, v) in vectors.iter().enumerate() {
            if let Some((t, _)) = v.entries().last() {
                if t.0 >= vocab_size {
                    return Err(Error::InvalidVector {
                        id: v.id().to_owned(),
                        reason: format!("token {t} outside vocabulary of size {vocab_size}"),
                    });
                }
            }
            if by_id.insert(v.id().to_owned(), pos).is_some() {
                return Err(Error::InvalidVector {
                    id: v.id().to_owned(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Collection {
            vectors,
            vocab_size,
            by_id,
        })
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&SparseVector> {
        self.position(id).map(|i| &self.vectors[i])
    }

    pub fn mean_nnz(&self) -> f64 {
        if self.vectors.is_empty() {
            return 0.0;
        }
        self.vectors.iter().map(nnz).sum::<usize>() as f64 / self.vectors.len() as f64
    }

    /// Applies `f` to every vector, keeping ids and vocabulary.
    pub fn map(&self, f: impl Fn(&SparseVector) -> SparseVector) -> Collection {
        let vectors = self.vectors.iter().map(f).collect();
        Collection {
            vectors,
            vocab_size: self.vocab_size,
            by_id: self.by_id.clone(),
        }
    }

    pub fn into_vectors(self) -> Vec<SparseVector> {
        self.vectors
    }
}

#[derive(Serialize, Deserialize)]
struct VectorRecord {
    id: String,
    vector: Vec<(u32, f64)>,
}

/// Reads the vector JSONL format: `{"id": ..., "vector": [[token, weight], ...]}`
/// per line, tokens ascending. Blank lines are skipped.
pub fn read_vectors(reader: impl BufRead, source: &str) -> Result<Vec<SparseVector>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let location = || format!("{source}:{}", lineno + 1);
        let rec: VectorRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(location(), e))?;
        let entries = rec.vector.into_iter().map(|(t, w)| (TokenId(t), w)).collect();
        let v = SparseVector::new(rec.id, entries).map_err(|e| Error::parse(location(), e))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_vectors<'a>(
    mut writer: impl Write,
    vectors: impl IntoIterator<Item = &'a SparseVector>,
) -> Result<()> {
    for v in vectors {
        let rec = VectorRecord {
            id: v.id().to_owned(),
            vector: v.iter().map(|(t, w)| (t.0, w)).collect(),
        };
        serde_json::to_writer(&mut writer, &rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL vector file into a collection.
pub fn load_collection(path: &std::path::Path, vocab_size: u32) -> Result<Collection> {
    let file = std::fs::File::open(path)?;
    let vectors = read_vectors(std::io::BufReader::new(file), &path.display().to_string())?;
    Collection::new(vectors, vocab_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(entries: &[(u32, f64)]) -> SparseVector {
        SparseVector::new("v", entries.iter().map(|&(t, w)| (TokenId(t), w)).collect()).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&sv(&[]), &sv(&[(5, 1.0)])), 0.0);
        assert_eq!(dot(&sv(&[(1, 2.0), (3, 1.5)]), &sv(&[(3, 2.0)])), 3.0);
        let v = dot(&sv(&[(1, 1.0), (2, 2.0)]), &sv(&[(1, 0.2), (2, 0.3)]));
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn maxpool_examples() {
        let m = TokenScoreMatrix::new(vec![vec![(TokenId(7), -3.0)]]);
        assert!(saturate_maxpool("d", &m).unwrap().is_empty());

        let m = TokenScoreMatrix::new(vec![vec![(TokenId(7), 0.0)]]);
        assert!(saturate_maxpool("d", &m).unwrap().is_empty());

        let e = std::f64::consts::E;
        let m = TokenScoreMatrix::new(vec![vec![(TokenId(7), 1.0)], vec![(TokenId(7), e - 1.0)]]);
        let v = saturate_maxpool("d", &m).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v.get(TokenId(7)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn maxpool_rejects_empty() {
        let m = TokenScoreMatrix::new(vec![]);
        assert!(matches!(saturate_maxpool("d", &m), Err(Error::EmptyInput)));
    }

    #[test]
    fn nnz_examples() {
        assert_eq!(nnz(&sv(&[])), 0);
        assert_eq!(nnz(&sv(&[(1, 0.5), (9, 2.0)])), 2);
    }

    #[test]
    fn constructor_validation() {
        assert!(SparseVector::new("x", vec![(TokenId(2), 1.0), (TokenId(1), 1.0)]).is_err());
        assert!(SparseVector::new("x", vec![(TokenId(1), 1.0), (TokenId(1), 1.0)]).is_err());
        assert!(SparseVector::new("x", vec![(TokenId(1), -0.1)]).is_err());
        assert!(SparseVector::new("x", vec![(TokenId(1), f64::NAN)]).is_err());
        let v = SparseVector::new("x", vec![(TokenId(1), 0.0), (TokenId(2), 1.0)]).unwrap();
        assert_eq!(v.entries(), &[(TokenId(2), 1.0)]);
    }

    #[test]
    fn collection_validation() {
        let a = sv(&[(1, 1.0)]).with_id("a");
        let b = sv(&[(10, 1.0)]).with_id("b");
        assert!(Collection::new(vec![a.clone(), a.clone()], 100).is_err());
        assert!(Collection::new(vec![a.clone(), b.clone()], 10).is_err());
        let c = Collection::new(vec![a, b], 11).unwrap();
        assert_eq!(c.position("b"), Some(1));
        assert_eq!(c.mean_nnz(), 1.0);
    }

    #[test]
    fn jsonl_round_trip() {
        let vs = vec![sv(&[(1, 0.25), (4, 1.5)]).with_id("d1"), SparseVector::empty("d2")];
        let mut buf = Vec::new();
        write_vectors(&mut buf, &vs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"id":"d1","vector":[[1,0.25],[4,1.5]]}"#));
        let back = read_vectors(&buf[..], "mem").unwrap();
        assert_eq!(back, vs);
    }

    #[test]
    fn jsonl_reports_line() {
        let input = "{\"id\":\"a\",\"vector\":[]}\n{\"id\":\"b\",\"vector\":[[3,1.0],[2,1.0]]}\n";
        let err = read_vectors(input.as_bytes(), "q.jsonl").unwrap_err();
        assert!(err.to_string().contains("q.jsonl:2"), "{err}");
    }

    fn arb_vector() -> impl Strategy<Value = SparseVector> {
        proptest::collection::btree_map(0u32..64, 0.0f64..4.0, 0..20).prop_map(|m| {
            SparseVector::new("p", m.into_iter().map(|(t, w)| (TokenId(t), w)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dot_is_symmetric(a in arb_vector(), b in arb_vector()) {
            prop_assert_eq!(dot(&a, &b), dot(&b, &a));
        }

        #[test]
        fn dot_cauchy_schwarz(a in arb_vector(), b in arb_vector()) {
            let bound = dot(&a, &a).sqrt() * dot(&b, &b).sqrt();
            prop_assert!(dot(&a, &b) <= bound * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn maxpool_monotone(
            rows in proptest::collection::vec(
                proptest::collection::vec((0u32..16, -2.0f64..3.0), 1..6), 1..5),
            bump in 0.0f64..2.0,
            row_pick in 0usize..5,
            col_pick in 0usize..6,
        ) {
            let to_matrix = |rows: &Vec<Vec<(u32, f64)>>| TokenScoreMatrix::new(
                rows.iter().map(|r| r.iter().map(|&(t, s)| (TokenId(t), s)).collect()).collect());
            let before = saturate_maxpool("d", &to_matrix(&rows)).unwrap();
            let mut raised = rows.clone();
            let r = row_pick % raised.len();
            let c = col_pick % raised[r].len();
            raised[r][c].1 += bump;
            let after = saturate_maxpool("d", &to_matrix(&raised)).unwrap();
            for (t, w) in before.iter() {
                prop_assert!(w >= 0.0);
                prop_assert!(after.get(t).unwrap_or(0.0) >= w);
            }
        }
    }
}
