//! Shared fixtures for the benchmarks.

use htsparse::eval::{synth_corpus, SynthCorpus};
use htsparse::train::{encode_collection, ToyEncoderParams};
use htsparse::{Collection, SynthConfig};

pub fn corpus(docs: usize) -> SynthCorpus {
    synth_corpus(&SynthConfig {
        docs,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus")
}

/// Documents and queries through the untrained encoder.
pub fn encoded(corpus: &SynthCorpus) -> (Collection, Collection) {
    let params = ToyEncoderParams::new(corpus.docs.vocab_size());
    (
        encode_collection(&params, &corpus.docs),
        encode_collection(&params, &corpus.queries),
    )
}
