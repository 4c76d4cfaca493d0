//! Deterministic synthetic retrieval corpus with planted relevance.
//!
//! Every token has a Zipfian popularity and belongs to one latent topic. A
//! document mixes three topics; its topical tokens get high raw features and
//! its background tokens (drawn from the global Zipf law) low ones. Each
//! query is written about a target document, judged against all documents
//! by the cosine affinity of the topic mixtures, and paired with training
//! triples whose teacher margin is the affinity difference.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::TripleRef;
use crate::vector::{Collection, SparseVector, TokenId};

use super::Qrels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub docs: usize,
    pub queries: usize,
    pub vocab: u32,
    pub zipf: f64,
    pub topics: usize,
    pub triples_per_query: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            docs: 1000,
            queries: 100,
            vocab: 5000,
            zipf: 1.1,
            topics: 20,
            triples_per_query: 20,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.docs == 0 {
            return bad("synthetic corpus needs at least one document".into());
        }
        if self.topics == 0 || (self.vocab as usize) < self.topics {
            return bad(format!(
                "need 1 <= topics <= vocab, got topics={} vocab={}",
                self.topics, self.vocab
            ));
        }
        if !(self.zipf.is_finite() && self.zipf >= 0.0) {
            return bad(format!("zipf exponent must be >= 0, got {}", self.zipf));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Raw encoder input features.
    pub docs: Collection,
    pub queries: Collection,
    pub qrels: Qrels,
    pub triples: Vec<TripleRef>,
}

/// Affinity cut-offs for grades 3, 2 and 1.
const GRADE_CUTS: [(f64, u32); 3] = [(0.97, 3), (0.92, 2), (0.85, 1)];
const MIX_TOPICS: usize = 3;
/// Non-relevant documents at least this close to the query are hard negatives.
const HARD_NEGATIVE: f64 = 0.5;
/// Teacher scores are the topic affinity on a logit-like scale.
const TEACHER_SCALE: f64 = 16.0;
/// Topical and background draws per document span `n..2n`.
const TOPICAL_DRAWS: usize = 15;
const BACKGROUND_DRAWS: usize = 20;
/// Background features stay below this; topical ones start at 5.
const BACKGROUND_MAX: f64 = 2.0;

/// Sparse topic mixture with unit L2 norm.
type Latent = Vec<(usize, f64)>;

fn cosine(a: &Latent, b: &Latent) -> f64 {
    a.iter()
        .map(|&(ta, wa)| b.iter().find(|&&(tb, _)| tb == ta).map_or(0.0, |&(_, wb)| wa * wb))
        .sum()
}

fn normalize(mut l: Latent) -> Latent {
    let norm = l.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    for e in &mut l {
        e.1 /= norm;
    }
    l
}

fn grade(affinity: f64) -> u32 {
    GRADE_CUTS
        .iter()
        .find(|&&(cut, _)| affinity >= cut)
        .map_or(0, |&(_, g)| g)
}

struct Vocabulary {
    topic_of: Vec<usize>,
    background: WeightedIndex<f64>,
    by_topic: Vec<(Vec<u32>, WeightedIndex<f64>)>,
}

impl Vocabulary {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let popularity: Vec<f64> = (0..cfg.vocab)
            .map(|r| (r as f64 + 1.0).powf(-cfg.zipf))
            .collect();
        let mut perm: Vec<usize> = (0..cfg.vocab as usize).collect();
        perm.shuffle(rng);
        let topic_of: Vec<usize> = perm.iter().map(|p| p % cfg.topics).collect();
        let by_topic = (0..cfg.topics)
            .map(|t| {
                let tokens: Vec<u32> = (0..cfg.vocab).filter(|&j| topic_of[j as usize] == t).collect();
                let dist =
                    WeightedIndex::new(tokens.iter().map(|&j| popularity[j as usize])).unwrap();
                (tokens, dist)
            })
            .collect();
        Vocabulary {
            topic_of,
            background: WeightedIndex::new(&popularity).unwrap(),
            by_topic,
        }
    }

    fn topical(&self, topic: usize, rng: &mut ChaCha8Rng) -> u32 {
        let (tokens, dist) = &self.by_topic[topic];
        tokens[dist.sample(rng)]
    }
}

fn draw_latent(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Latent {
    let k = MIX_TOPICS.min(cfg.topics);
    let topics: Vec<usize> = rand::seq::index::sample(rng, cfg.topics, k).into_vec();
    let weights = [1.0, rng.random_range(0.0..0.6), rng.random_range(0.0..0.3)];
    normalize(topics.into_iter().zip(weights).collect())
}

fn pick_topic(latent: &Latent, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let total: f64 = latent.iter().map(|&(_, w)| w).sum();
    let mut u = rng.random_range(0.0..total);
    for &(t, w) in latent {
        if u < w {
            return (t, w);
        }
        u -= w;
    }
    *latent.last().unwrap()
}

fn draw_doc(
    id: String,
    latent: &Latent,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> SparseVector {
    // token -> (topical draws, mixture weight of its topic)
    let mut topical: BTreeMap<u32, (u32, f64)> = BTreeMap::new();
    for _ in 0..rng.random_range(TOPICAL_DRAWS..2 * TOPICAL_DRAWS) {
        let (t, w) = pick_topic(latent, rng);
        let tok = vocab.topical(t, rng);
        topical.entry(tok).or_insert((0, w)).0 += 1;
    }
    let mut entries: BTreeMap<u32, f64> = BTreeMap::new();
    for _ in 0..rng.random_range(BACKGROUND_DRAWS..2 * BACKGROUND_DRAWS) {
        let tok = vocab.background.sample(rng) as u32;
        entries.insert(tok, rng.random_range(0.1..BACKGROUND_MAX));
    }
    for (tok, (tf, mix)) in topical {
        let x = 5.0 + 8.0 * mix + 3.0 * (tf as f64).ln() + rng.random_range(0.0..6.0);
        let slot = entries.entry(tok).or_insert(0.0);
        *slot = slot.max(x);
    }
    SparseVector::new(id, entries.into_iter().map(|(t, x)| (TokenId(t), x)).collect())
        .expect("generated weights are finite and positive")
}

fn draw_query(
    id: String,
    target: &SparseVector,
    latent: &Latent,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> SparseVector {
    let mut entries: BTreeMap<u32, f64> = BTreeMap::new();
    for _ in 0..rng.random_range(1..4) {
        let tok = vocab.background.sample(rng) as u32;
        entries.insert(tok, rng.random_range(0.1..BACKGROUND_MAX));
    }
    for _ in 0..rng.random_range(1..4) {
        let (t, _) = pick_topic(latent, rng);
        entries.insert(vocab.topical(t, rng), 3.0 + rng.random_range(0.0..6.0));
    }
    // Words of the target itself, favouring its strongest tokens.
    let own: Vec<(TokenId, f64)> = target
        .iter()
        .filter(|&(t, _)| latent.iter().any(|&(lt, _)| lt == vocab.topic_of[t.index()]))
        .collect();
    if !own.is_empty() {
        let dist = WeightedIndex::new(own.iter().map(|&(_, x)| x)).unwrap();
        for _ in 0..rng.random_range(3..6) {
            let (t, _) = own[dist.sample(rng)];
            entries.insert(t.0, 5.0 + rng.random_range(0.0..10.0));
        }
    }
    SparseVector::new(id, entries.into_iter().map(|(t, x)| (TokenId(t), x)).collect())
        .expect("generated weights are finite and positive")
}

/// Generates documents, queries, graded judgments and training triples.
/// The output depends only on `cfg`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocabulary::new(cfg, &mut rng);

    let width = cfg.docs.to_string().len();
    let mut doc_latents = Vec::with_capacity(cfg.docs);
    let mut docs = Vec::with_capacity(cfg.docs);
    for i in 0..cfg.docs {
        let latent = draw_latent(cfg, &mut rng);
        docs.push(draw_doc(format!("D{i:0width$}"), &latent, &vocab, &mut rng));
        doc_latents.push(latent);
    }

    let qwidth = cfg.queries.to_string().len();
    let mut queries = Vec::with_capacity(cfg.queries);
    let mut qrels = Qrels::new();
    let mut triples = Vec::new();
    for i in 0..cfg.queries {
        let qid = format!("Q{i:0qwidth$}");
        let target = rng.random_range(0..cfg.docs);
        let latent = normalize(
            doc_latents[target]
                .iter()
                .map(|&(t, w)| (t, w * rng.random_range(0.8..1.2)))
                .collect(),
        );
        queries.push(draw_query(qid.clone(), &docs[target], &latent, &vocab, &mut rng));

        let affinity: Vec<f64> = doc_latents.iter().map(|d| cosine(&latent, d)).collect();
        let mut relevant = Vec::new();
        for (d, &a) in affinity.iter().enumerate() {
            let g = grade(a);
            if g > 0 {
                qrels.insert(&qid, docs[d].id(), g);
                relevant.push(d);
            }
        }
        if relevant.is_empty() {
            relevant.push(target);
        }
        let hard: Vec<usize> = (0..cfg.docs)
            .filter(|&d| affinity[d] >= HARD_NEGATIVE && grade(affinity[d]) == 0)
            .collect();
        for _ in 0..cfg.triples_per_query {
            let pos = *relevant.choose(&mut rng).unwrap();
            let neg = if !hard.is_empty() && rng.random_bool(0.5) {
                *hard.choose(&mut rng).unwrap()
            } else {
                rng.random_range(0..cfg.docs)
            };
            if affinity[neg] >= affinity[pos] {
                continue;
            }
            triples.push(TripleRef {
                q: qid.clone(),
                pos: docs[pos].id().to_owned(),
                neg: docs[neg].id().to_owned(),
                teacher_margin: TEACHER_SCALE * (affinity[pos] - affinity[neg]),
            });
        }
    }

    Ok(SynthCorpus {
        docs: Collection::new(docs, cfg.vocab)?,
        queries: Collection::new(queries, cfg.vocab)?,
        qrels,
        triples,
    })
}
