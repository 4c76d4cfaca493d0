use proptest::prelude::*;

use htsparse::train::{grad_analytic, loss_total, TrainConfig, TrainState, TrainingTriple};
use htsparse::{SideThresholding, SparseVector, ThresholdConfig, TokenId};

const VOCAB: u32 = 12;
const H: f64 = 1e-5;

fn raw(id: &str) -> impl Strategy<Value = SparseVector> {
    let id = id.to_owned();
    proptest::collection::btree_map(0..VOCAB, 0.3f64..3.0, 1..6).prop_map(move |m| {
        SparseVector::new(id.clone(), m.into_iter().map(|(t, x)| (TokenId(t), x)).collect()).unwrap()
    })
}

fn side() -> impl Strategy<Value = SideThresholding> {
    prop_oneof![
        Just(SideThresholding::Phi),
        Just(SideThresholding::Soft),
        Just(SideThresholding::Sigmoid)
    ]
}

fn triple() -> impl Strategy<Value = TrainingTriple> {
    (raw("q"), raw("p"), raw("n"), -2.0f64..2.0)
        .prop_map(|(q, p, n, m)| TrainingTriple::new(q, p, n, m).unwrap())
}

/// Distance of the nearest encoded weight to a kink of the soft threshold.
fn soft_kink_distance(batch: &[TrainingTriple], state: &TrainState, cfg: &TrainConfig) -> f64 {
    let mut d = f64::INFINITY;
    let mut scan = |v: &SparseVector, side: SideThresholding, t: f64| {
        if side == SideThresholding::Soft {
            for (tok, x) in v.iter() {
                let z = state.params.affine(tok, x);
                d = d.min((z.max(0.0).ln_1p() - t).abs());
            }
        }
    };
    for tr in batch {
        scan(&tr.query_raw, cfg.query_side, state.t_q);
        scan(&tr.pos_raw, cfg.doc_side, state.t_d);
        scan(&tr.neg_raw, cfg.doc_side, state.t_d);
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn analytic_matches_central_differences(
        batch in proptest::collection::vec(triple(), 1..4),
        q_side in side(),
        d_side in side(),
        k in prop::sample::select(vec![2.5, 25.0, 250.0]),
        t_d in 0.0f64..1.5,
        t_q in 0.0f64..1.5,
        scale in proptest::collection::vec(0.5f64..1.5, VOCAB as usize),
        lambdas in (0.0f64..0.5, 0.0f64..0.5, 0.0f64..3.0),
    ) {
        let mut state = TrainState::new(VOCAB, 0);
        state.params.scale = scale;
        state.t_d = t_d;
        state.t_q = t_q;
        let cfg = TrainConfig {
            thresholds: ThresholdConfig { k, lambda_q: lambdas.0, lambda_d: lambdas.1, lambda_t: lambdas.2, ..Default::default() },
            query_side: q_side,
            doc_side: d_side,
        }.with_state(&state);
        prop_assume!(soft_kink_distance(&batch, &state, &cfg) > 1e-3);

        let g = grad_analytic(&batch, &state, &cfg).unwrap();
        let loss = |s: &TrainState| loss_total(&batch, s, &cfg.with_state(s)).unwrap().total;
        let central = |f: &dyn Fn(&mut TrainState, f64)| {
            let (mut p, mut m) = (state.clone(), state.clone());
            f(&mut p, H);
            f(&mut m, -H);
            (loss(&p) - loss(&m)) / (2.0 * H)
        };
        let close = |a: f64, n: f64| (a - n).abs() <= 1e-7 || (a - n).abs() / a.abs().max(n.abs()) < 1e-4;

        // t = 0 is a clamp boundary; only the one-sided interior is differentiable.
        if t_d > H {
            let n = central(&|s, h| s.t_d += h);
            prop_assert!(close(g.t_d, n), "t_D {} vs {}", g.t_d, n);
        }
        if t_q > H {
            let n = central(&|s, h| s.t_q += h);
            prop_assert!(close(g.t_q, n), "t_Q {} vs {}", g.t_q, n);
        }
        for (&tok, &(ga, gb)) in &g.encoder {
            let i = tok.index();
            let na = central(&|s, h| s.params.scale[i] += h);
            let nb = central(&|s, h| s.params.bias[i] += h);
            prop_assert!(close(ga, na), "scale[{}] {} vs {}", i, ga, na);
            prop_assert!(close(gb, nb), "bias[{}] {} vs {}", i, gb, nb);
        }
    }
}
