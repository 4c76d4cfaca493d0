#![allow(dead_code)]

use proptest::prelude::*;

use htsparse::{Collection, SparseVector, TokenId};

pub const VOCAB: u32 = 24;

pub fn arb_vector(id: String, max_len: usize) -> impl Strategy<Value = SparseVector> {
    proptest::collection::btree_map(0..VOCAB, 0.01f64..4.0, 0..max_len).prop_map(move |m| {
        SparseVector::new(id.clone(), m.into_iter().map(|(t, w)| (TokenId(t), w)).collect()).unwrap()
    })
}

/// Collection with at least one non-empty document.
pub fn arb_collection(max_docs: usize) -> impl Strategy<Value = Collection> {
    proptest::collection::vec(proptest::collection::btree_map(0..VOCAB, 0.01f64..4.0, 0..10), 1..max_docs)
        .prop_filter("needs a posting", |docs| docs.iter().any(|d| !d.is_empty()))
        .prop_map(|docs| {
            let vectors = docs
                .into_iter()
                .enumerate()
                .map(|(i, m)| {
                    SparseVector::new(format!("d{i}"), m.into_iter().map(|(t, w)| (TokenId(t), w)).collect())
                        .unwrap()
                })
                .collect();
            Collection::new(vectors, VOCAB).unwrap()
        })
}

/// Collection whose weights take few distinct values, so score ties are common.
pub fn arb_tied_collection(max_docs: usize) -> impl Strategy<Value = Collection> {
    proptest::collection::vec(proptest::collection::btree_map(0..8u32, 1u32..4, 1..5), 1..max_docs).prop_map(
        |docs| {
            let vectors = docs
                .into_iter()
                .enumerate()
                .map(|(i, m)| {
                    SparseVector::new(
                        format!("d{i}"),
                        m.into_iter().map(|(t, w)| (TokenId(t), w as f64 * 0.5)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            Collection::new(vectors, VOCAB).unwrap()
        },
    )
}
