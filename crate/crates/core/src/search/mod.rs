//! Top-k retrieval: an exhaustive term-at-a-time oracle and document-at-a-time
//! MaxScore. Both return bit-identical results.
//!
//! Each document score is summed in ascending token order starting from 0.0
//! in both algorithms, so equality is exact rather than up to rounding.

mod run;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{InvertedIndex, PostingList};
use crate::threshold::soft;
use crate::vector::{SparseVector, TokenId};

pub use run::{read_run, write_run, Run, RunEntry};

/// Relative slack applied to upper bounds before pruning, so rounding in
/// partial sums can never cause a qualifying document to be dropped.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedQuery {
    id: String,
    terms: Vec<(TokenId, f64)>,
}

impl PreparedQuery {
    /// Uses the vector's weights as they are.
    pub fn from_vector(v: &SparseVector) -> Self {
        PreparedQuery {
            id: v.id().to_owned(),
            terms: v.entries().to_vec(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn terms(&self) -> &[(TokenId, f64)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Soft-thresholds query weights by `t_q`, dropping those that reach zero.
pub fn prepare_query(v: &SparseVector, t_q: f64) -> PreparedQuery {
    PreparedQuery::from_vector(&v.map_weights(|_, w| soft(w, t_q)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredDoc {
    pub ordinal: u32,
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult {
    /// Sorted by score descending, then ordinal ascending.
    pub hits: Vec<ScoredDoc>,
    pub postings_scored: u64,
    /// Traversal time only.
    pub elapsed: Duration,
}

impl TopKResult {
    /// Hits and scores, ignoring timing and counters.
    pub fn same_hits(&self, other: &TopKResult) -> bool {
        self.hits.len() == other.hits.len()
            && self.hits.iter().zip(&other.hits).all(|(a, b)| {
                a.ordinal == b.ordinal && a.score.to_bits() == b.score.to_bits()
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    MaxScore,
    Exhaustive,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxscore" => Ok(Algorithm::MaxScore),
            "exhaustive" => Ok(Algorithm::Exhaustive),
            _ => Err(Error::InvalidParameter(format!(
                "unknown algorithm `{s}` (expected maxscore or exhaustive)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::MaxScore => "maxscore",
            Algorithm::Exhaustive => "exhaustive",
        })
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    Ok(())
}

/// Query terms present in the index, in token order.
fn matched_terms<'a>(index: &'a InvertedIndex, q: &PreparedQuery) -> Vec<(f64, &'a PostingList)> {
    q.terms
        .iter()
        .filter_map(|&(t, w)| index.list(t).map(|l| (w, l)))
        .collect()
}

/// Ranking order: score descending, then ordinal ascending.
fn rank_cmp(a: (f64, u32), b: (f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn to_hits(index: &InvertedIndex, mut scored: Vec<(f64, u32)>, k: usize) -> Vec<ScoredDoc> {
    scored.sort_unstable_by(|&a, &b| rank_cmp(a, b));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(score, ordinal)| ScoredDoc {
            ordinal,
            id: index.doc_id(ordinal).to_owned(),
            score,
        })
        .collect()
}

/// Scores every document sharing a term with the query.
pub fn exhaustive_topk(index: &InvertedIndex, q: &PreparedQuery, k: usize) -> Result<TopKResult> {
    check_k(k)?;
    let start = Instant::now();
    let terms = matched_terms(index, q);
    let mut acc = vec![0.0f64; index.doc_count()];
    let mut touched = Vec::new();
    let mut postings_scored = 0u64;
    for (qw, list) in terms {
        for (&d, &w) in list.docs().iter().zip(list.weights()) {
            let slot = &mut acc[d as usize];
            if *slot == 0.0 {
                touched.push(d);
            }
            *slot += qw * w;
        }
        postings_scored += list.len() as u64;
    }
    touched.sort_unstable();
    touched.dedup();
    let scored = touched
        .into_iter()
        .map(|d| (acc[d as usize], d))
        .filter(|&(s, _)| s > 0.0)
        .collect();
    let hits = to_hits(index, scored, k);
    Ok(TopKResult {
        hits,
        postings_scored,
        elapsed: start.elapsed(),
    })
}

/// Heap entry ordered so the heap's maximum is the current worst hit.
#[derive(Debug, Clone, Copy)]
struct Worst(f64, u32);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp((self.0, self.1), (other.0, other.1))
    }
}

struct Cursor<'a> {
    token: TokenId,
    qw: f64,
    list: &'a PostingList,
    pos: usize,
}

impl Cursor<'_> {
    #[inline]
    fn doc(&self) -> Option<u32> {
        self.list.docs().get(self.pos).copied()
    }

    /// Advances to the first posting with `doc >= target`.
    #[inline]
    fn seek(&mut self, target: u32) {
        let docs = &self.list.docs()[self.pos..];
        if docs.first().is_some_and(|&d| d < target) {
            self.pos += docs.partition_point(|&d| d < target);
        }
    }
}

/// Document-at-a-time MaxScore.
///
/// Terms are ordered by upper bound `q_w · max_weight`. The longest prefix
/// whose bounds sum to at most the current k-th score θ is non-essential:
/// a document matching only those terms cannot enter the top k. Candidates
/// come from the essential lists; non-essential lists are probed from the
/// largest bound down, stopping early once the document cannot beat θ.
pub fn maxscore_topk(index: &InvertedIndex, q: &PreparedQuery, k: usize) -> Result<TopKResult> {
    check_k(k)?;
    let start = Instant::now();
    let mut cursors: Vec<Cursor> = matched_terms(index, q)
        .into_iter()
        .map(|(qw, list)| Cursor {
            token: list.token(),
            qw,
            list,
            pos: 0,
        })
        .collect();
    cursors.sort_by(|a, b| {
        (a.qw * a.list.max_weight())
            .total_cmp(&(b.qw * b.list.max_weight()))
            .then(a.token.cmp(&b.token))
    });
    // prefix[i] = Σ_{j <= i} bound_j
    let prefix: Vec<f64> = cursors
        .iter()
        .scan(0.0, |s, c| {
            *s += c.qw * c.list.max_weight();
            Some(*s)
        })
        .collect();
    let bound = |x: f64| x * (1.0 + BOUND_SLACK);

    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
    let mut theta = 0.0f64;
    let mut first_essential = 0usize;
    let mut postings_scored = 0u64;
    let mut contribs: Vec<(TokenId, f64)> = Vec::with_capacity(cursors.len());

    while first_essential < cursors.len() {
        let Some(cur) = cursors[first_essential..].iter().filter_map(Cursor::doc).min() else {
            break;
        };
        contribs.clear();
        let mut partial = 0.0;
        for c in &mut cursors[first_essential..] {
            if c.doc() == Some(cur) {
                let x = c.qw * c.list.weights()[c.pos];
                contribs.push((c.token, x));
                partial += x;
                c.pos += 1;
                postings_scored += 1;
            }
        }
        let full = heap.len() == k;
        let mut pruned = false;
        for i in (0..first_essential).rev() {
            if full && bound(partial + prefix[i]) <= theta {
                pruned = true;
                break;
            }
            let c = &mut cursors[i];
            c.seek(cur);
            if c.doc() == Some(cur) {
                let x = c.qw * c.list.weights()[c.pos];
                contribs.push((c.token, x));
                partial += x;
                c.pos += 1;
                postings_scored += 1;
            }
        }
        if pruned {
            continue;
        }
        contribs.sort_unstable_by_key(|&(t, _)| t);
        let score = contribs.iter().fold(0.0, |s, &(_, x)| s + x);
        if score <= 0.0 || (full && score <= theta) {
            continue;
        }
        heap.push(Worst(score, cur));
        if heap.len() > k {
            heap.pop();
        }
        if heap.len() == k {
            theta = heap.peek().map_or(0.0, |w| w.0);
            while first_essential < cursors.len() && bound(prefix[first_essential]) <= theta {
                first_essential += 1;
            }
        }
    }

    let scored = heap.into_iter().map(|Worst(s, d)| (s, d)).collect();
    let hits = to_hits(index, scored, k);
    Ok(TopKResult {
        hits,
        postings_scored,
        elapsed: start.elapsed(),
    })
}

pub fn search(
    index: &InvertedIndex,
    q: &PreparedQuery,
    k: usize,
    algo: Algorithm,
) -> Result<TopKResult> {
    match algo {
        Algorithm::MaxScore => maxscore_topk(index, q, k),
        Algorithm::Exhaustive => exhaustive_topk(index, q, k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub n: usize,
}

impl LatencyStats {
    /// Mean and nearest-rank p99 (the `ceil(0.99 n)`-th smallest value).
    pub fn from_durations(times: &[Duration]) -> Self {
        if times.is_empty() {
            return LatencyStats::default();
        }
        let mut ms: Vec<f64> = times.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        LatencyStats {
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            p99_ms: ms[rank - 1],
            n,
        }
    }
}

/// Runs prepared queries one after another; only traversal is timed.
pub fn batch_search_prepared(
    index: &InvertedIndex,
    queries: &[PreparedQuery],
    k: usize,
    algo: Algorithm,
) -> Result<(Vec<TopKResult>, LatencyStats)> {
    check_k(k)?;
    let results = queries
        .iter()
        .map(|q| search(index, q, k, algo))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<Duration> = results.iter().map(|r| r.elapsed).collect();
    Ok((results, LatencyStats::from_durations(&times)))
}

/// Soft-thresholds every query by `t_q`, then searches.
pub fn batch_search(
    index: &InvertedIndex,
    queries: &[SparseVector],
    k: usize,
    t_q: f64,
    algo: Algorithm,
) -> Result<(Vec<TopKResult>, LatencyStats)> {
    let prepared: Vec<PreparedQuery> = queries.iter().map(|q| prepare_query(q, t_q)).collect();
    batch_search_prepared(index, &prepared, k, algo)
}
