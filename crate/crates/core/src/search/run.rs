//! TREC run files: `qid Q0 docid rank score runtag`, ranks from 1, scores
//! with six decimals.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::TopKResult;

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Ranked documents per query, each list in rank order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    queries: BTreeMap<String, Vec<RunEntry>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends hits in order; ranks continue from any existing entries.
    pub fn push_result(&mut self, qid: &str, result: &TopKResult) {
        let list = self.queries.entry(qid.to_owned()).or_default();
        for h in &result.hits {
            let rank = list.len() + 1;
            list.push(RunEntry {
                doc_id: h.id.clone(),
                rank,
                score: h.score,
            });
        }
    }

    /// Builds a run from ranked document ids; scores descend from the list length.
    pub fn from_ranking<S: AsRef<str>>(rankings: &[(&str, Vec<S>)]) -> Self {
        let mut run = Run::new();
        for (qid, docs) in rankings {
            let list = run.queries.entry((*qid).to_owned()).or_default();
            let n = docs.len();
            for (i, d) in docs.iter().enumerate() {
                list.push(RunEntry {
                    doc_id: d.as_ref().to_owned(),
                    rank: i + 1,
                    score: (n - i) as f64,
                });
            }
        }
        run
    }

    pub fn ranking(&self, qid: &str) -> Option<&[RunEntry]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.queries.iter().map(|(q, v)| (q.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Writes results in the order given.
pub fn write_run<'a>(
    mut w: impl Write,
    results: impl IntoIterator<Item = (&'a str, &'a TopKResult)>,
    tag: &str,
) -> std::io::Result<()> {
    for (qid, r) in results {
        for (i, h) in r.hits.iter().enumerate() {
            writeln!(w, "{qid} Q0 {} {} {:.6} {tag}", h.id, i + 1, h.score)?;
        }
    }
    Ok(())
}

/// Parses a run file; entries are ordered by rank within each query.
pub fn read_run(reader: impl BufRead, source: &str) -> Result<Run> {
    let mut run = Run::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let location = || format!("{source}:{}", lineno + 1);
        let [qid, _, doc, rank, score, _] = fields[..] else {
            return Err(Error::parse(
                location(),
                format!("expected 6 fields `qid Q0 docid rank score tag`, found {}", fields.len()),
            ));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::parse(location(), format!("bad rank `{rank}`")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| Error::parse(location(), format!("bad score `{score}`")))?;
        run.queries.entry(qid.to_owned()).or_default().push(RunEntry {
            doc_id: doc.to_owned(),
            rank,
            score,
        });
    }
    for list in run.queries.values_mut() {
        list.sort_by(|a, b| a.rank.cmp(&b.rank).then(b.score.total_cmp(&a.score)));
    }
    Ok(run)
}
