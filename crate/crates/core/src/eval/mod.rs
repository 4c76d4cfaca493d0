//! Relevance judgments, MRR@k / nDCG@k, evaluation reports, the synthetic
//! corpus generator and the thresholding ablation grid.

pub mod ablation;
mod synth;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{LatencyStats, Run};

pub use synth::{synth_corpus, SynthConfig, SynthCorpus};

/// Graded judgments: query id → doc id → grade. Unlisted pairs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) {
        self.judgments
            .entry(qid.to_owned())
            .or_default()
            .insert(doc_id.to_owned(), grade);
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn judged(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.judgments.iter().map(|(q, m)| (q.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Parses `qid 0 docid grade` lines.
pub fn read_qrels(reader: impl BufRead, source: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let location = || format!("{source}:{}", lineno + 1);
        let [qid, _, doc, grade] = fields[..] else {
            return Err(Error::parse(
                location(),
                format!("expected 4 fields `qid 0 docid grade`, found {}", fields.len()),
            ));
        };
        let grade: u32 = grade
            .parse()
            .map_err(|_| Error::parse(location(), format!("grade `{grade}` is not an integer >= 0")))?;
        qrels.insert(qid, doc, grade);
    }
    Ok(qrels)
}

pub fn write_qrels(mut w: impl Write, qrels: &Qrels) -> std::io::Result<()> {
    for (qid, docs) in qrels.queries() {
        for (doc, grade) in docs {
            writeln!(w, "{qid} 0 {doc} {grade}")?;
        }
    }
    Ok(())
}

/// Mean reciprocal rank of the first document with grade >= 1 in the top
/// `k`. Queries without any judged-relevant document are left out.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (qid, judged) in qrels.queries() {
        if !judged.values().any(|&g| g >= 1) {
            continue;
        }
        n += 1;
        let ranking = run.ranking(qid).unwrap_or(&[]);
        if let Some(pos) = ranking
            .iter()
            .take(k)
            .position(|e| qrels.grade(qid, &e.doc_id) >= 1)
        {
            sum += 1.0 / (pos + 1) as f64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyQuerySet);
    }
    Ok(sum / n as f64)
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| ((1u64 << g.min(62)) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG with gain `2^grade - 1` and discount `log2(rank + 1)`. Queries whose
/// ideal DCG is zero are left out.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (qid, judged) in qrels.queries() {
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter().take(k));
        if idcg == 0.0 {
            continue;
        }
        n += 1;
        let ranking = run.ranking(qid).unwrap_or(&[]);
        let actual = dcg(ranking.iter().take(k).map(|e| qrels.grade(qid, &e.doc_id)));
        sum += actual / idcg;
    }
    if n == 0 {
        return Err(Error::EmptyQuerySet);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr_at_10: f64,
    pub ndcg_at_10: f64,
    pub latency: LatencyStats,
    pub mean_dlen: f64,
    pub mean_qlen: f64,
    pub index_bytes: u64,
}

impl EvalReport {
    /// Relevance metrics at cutoff `k`; the efficiency fields stay zero.
    pub fn from_run(run: &Run, qrels: &Qrels, k: usize) -> Result<Self> {
        Ok(EvalReport {
            mrr_at_10: mrr_at_k(run, qrels, k)?,
            ndcg_at_10: ndcg_at_k(run, qrels, k)?,
            ..Default::default()
        })
    }

    pub fn to_table(&self) -> String {
        format!(
            "metric      value\n\
             MRR@10      {:.4}\n\
             nDCG@10     {:.4}\n\
             MRT (ms)    {:.3}\n\
             P99 (ms)    {:.3}\n\
             Dlen        {:.2}\n\
             Qlen        {:.2}\n\
             index bytes {}\n",
            self.mrr_at_10,
            self.ndcg_at_10,
            self.latency.mean_ms,
            self.latency.p99_ms,
            self.mean_dlen,
            self.mean_qlen,
            self.index_bytes
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels(lines: &str) -> Qrels {
        read_qrels(lines.as_bytes(), "qrels").unwrap()
    }

    #[test]
    fn mrr_examples() {
        let q = qrels("q1 0 a 1\nq2 0 x 2\n");
        let run = Run::from_ranking(&[("q1", vec!["b", "a"]), ("q2", vec!["x"])]);
        assert_eq!(mrr_at_k(&run, &q, 10).unwrap(), 0.75);

        let run = Run::from_ranking(&[("q1", vec!["b"; 1])]);
        let q1 = qrels("q1 0 a 1\n");
        assert_eq!(mrr_at_k(&run, &q1, 10).unwrap(), 0.0);
    }

    #[test]
    fn mrr_cutoff_and_exclusion() {
        let docs: Vec<String> = (0..11).map(|i| format!("d{i}")).collect();
        let run = Run::from_ranking(&[("q1", docs.clone()), ("q2", docs)]);
        // relevant only at rank 11; q2 has judgments but none relevant
        let q = qrels("q1 0 d10 1\nq2 0 d0 0\n");
        assert_eq!(mrr_at_k(&run, &q, 10).unwrap(), 0.0);
        assert!(matches!(mrr_at_k(&run, &qrels("q2 0 d0 0\n"), 10), Err(Error::EmptyQuerySet)));
    }

    #[test]
    fn ndcg_examples() {
        let q = qrels("q 0 dA 3\nq 0 dB 1\n");
        let ideal = Run::from_ranking(&[("q", vec!["dA", "dB"])]);
        assert!((ndcg_at_k(&ideal, &q, 10).unwrap() - 1.0).abs() < 1e-12);
        let swapped = Run::from_ranking(&[("q", vec!["dB", "dA"])]);
        let v = ndcg_at_k(&swapped, &q, 10).unwrap();
        assert!((v - 0.709_810).abs() < 1e-6, "{v}");

        let zero = qrels("q 0 dA 3\nz 0 dA 0\n");
        let run = Run::from_ranking(&[("q", vec!["dA"]), ("z", vec!["dA"])]);
        assert_eq!(ndcg_at_k(&run, &zero, 10).unwrap(), 1.0);
    }

    #[test]
    fn qrels_parse_errors() {
        let err = read_qrels("q 0 d\n".as_bytes(), "qrels.txt").unwrap_err();
        assert!(err.to_string().contains("qrels.txt:1"), "{err}");
        let err = read_qrels("q 0 d -1\n".as_bytes(), "qrels.txt").unwrap_err();
        assert!(err.to_string().contains("grade"), "{err}");
    }

    #[test]
    fn qrels_round_trip() {
        let q = qrels("q1 0 a 1\nq1 0 b 3\nq2 0 c 0\n");
        let mut out = Vec::new();
        write_qrels(&mut out, &q).unwrap();
        assert_eq!(read_qrels(out.as_slice(), "x").unwrap(), q);
    }
}
