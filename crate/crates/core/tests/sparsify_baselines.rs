mod common;

use proptest::prelude::*;

use common::arb_collection;
use htsparse::index::{build, dcp_keep_count, sparsify, write_to};
use htsparse::SparsifyMode;

proptest! {
    #[test]
    fn topk_keeps_the_largest(docs in arb_collection(30), k in 1usize..8) {
        for v in docs.vectors() {
            let s = sparsify(v, SparsifyMode::TopK(k));
            prop_assert_eq!(s.len(), v.len().min(k));
            let smallest_kept = s.iter().map(|(_, w)| w).fold(f64::INFINITY, f64::min);
            let dropped = v.iter().filter(|&(t, _)| s.get(t).is_none());
            for (_, w) in dropped {
                prop_assert!(w <= smallest_kept);
            }
        }
    }

    #[test]
    fn dcp_keeps_ceil_fraction(docs in arb_collection(30), f in 0.01f64..=1.0) {
        for v in docs.vectors() {
            let s = sparsify(v, SparsifyMode::Dcp(f));
            let want = if v.is_empty() { 0 } else { (f * v.len() as f64).ceil() as usize };
            prop_assert_eq!(s.len(), want);
            prop_assert_eq!(dcp_keep_count(f, v.len()), want);
        }
    }

    #[test]
    fn cut_and_ht_build_identical_files(docs in arb_collection(30), t in 0.0f64..1.0, bits in prop::sample::select(vec![0u8, 8])) {
        let (Ok(a), Ok(b)) = (build(&docs, SparsifyMode::Cut(t), bits), build(&docs, SparsifyMode::Ht(t), bits)) else {
            return Ok(());
        };
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_to(&a, &mut x).unwrap();
        write_to(&b, &mut y).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn ht_keeps_exactly_weights_at_or_above_t(docs in arb_collection(30), t in 0.0f64..3.0) {
        for v in docs.vectors() {
            let s = sparsify(v, SparsifyMode::Ht(t));
            let want: Vec<_> = v.iter().filter(|&(_, w)| w >= t).collect();
            prop_assert_eq!(s.iter().collect::<Vec<_>>(), want);
        }
    }
}
