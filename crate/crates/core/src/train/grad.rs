//! Closed-form gradients of the extended loss with respect to the two
//! thresholds and the toy encoder parameters, and the plain SGD update.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::threshold::{d_reg_l_t, reg_l_t};
use crate::vector::{SparseVector, TokenId};

use super::loss::{doc_means, LossBreakdown};
use super::{TrainConfig, TrainState, TrainingTriple};

/// `∂L/∂θ` for every trainable parameter. Encoder gradients are kept only
/// for tokens on the batch support (all others are exactly zero).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub t_d: f64,
    pub t_q: f64,
    /// token -> (∂L/∂scale_j, ∂L/∂bias_j)
    pub encoder: BTreeMap<TokenId, (f64, f64)>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.t_d.is_finite()
            && self.t_q.is_finite()
            && self.encoder.values().all(|(a, b)| a.is_finite() && b.is_finite())
    }

    pub fn scale(&self, token: TokenId) -> f64 {
        self.encoder.get(&token).map_or(0.0, |g| g.0)
    }

    pub fn bias(&self, token: TokenId) -> f64 {
        self.encoder.get(&token).map_or(0.0, |g| g.1)
    }
}

/// One encoded entry with what the backward pass needs: raw feature `x`,
/// pre-activation `z > 0` and output `w = log(1 + z)`.
#[derive(Debug, Clone, Copy)]
struct Activation {
    token: TokenId,
    x: f64,
    z: f64,
    w: f64,
}

fn activate(state: &TrainState, raw: &SparseVector) -> Vec<Activation> {
    raw.iter()
        .filter_map(|(token, x)| {
            let z = state.params.affine(token, x);
            (z > 0.0).then(|| Activation {
                token,
                x,
                z,
                w: z.ln_1p(),
            })
        })
        .collect()
}

fn lookup(acts: &[Activation], token: TokenId) -> Option<&Activation> {
    acts.binary_search_by_key(&token, |a| a.token)
        .ok()
        .map(|i| &acts[i])
}

struct Forward {
    q: Vec<Activation>,
    pos: Vec<Activation>,
    neg: Vec<Activation>,
    /// `s(q,d⁺) - s(q,d⁻) - teacher_margin`
    residual: f64,
}

fn to_vector(acts: &[Activation]) -> SparseVector {
    SparseVector::from_parts_unchecked(
        String::new(),
        acts.iter().filter(|a| a.w > 0.0).map(|a| (a.token, a.w)).collect(),
    )
}

/// Accumulates `∂L/∂w` of one encoded entry into the encoder gradients
/// through `w = log(1 + scale·x + bias)`.
fn backprop_entry(grads: &mut Gradients, act: &Activation, dl_dw: f64) {
    let dl_dz = dl_dw / (1.0 + act.z);
    let slot = grads.encoder.entry(act.token).or_insert((0.0, 0.0));
    slot.0 += dl_dz * act.x;
    slot.1 += dl_dz;
}

/// Loss and its analytic gradient in one pass.
pub fn loss_and_grad(
    batch: &[TrainingTriple],
    state: &TrainState,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cfg = cfg.with_state(state);
    let th = cfg.thresholds;
    let (qs, ds) = (cfg.query_side, cfg.doc_side);
    let (t_q, t_d, k) = (th.t_q, th.t_d, th.k);
    let b = batch.len() as f64;

    let score = |q: &[Activation], d: &[Activation]| -> f64 {
        q.iter()
            .filter_map(|qa| {
                lookup(d, qa.token).map(|da| qs.value(qa.w, t_q, k) * ds.value(da.w, t_d, k))
            })
            .sum()
    };

    let forward: Vec<Forward> = batch
        .iter()
        .map(|t| {
            let q = activate(state, &t.query_raw);
            let pos = activate(state, &t.pos_raw);
            let neg = activate(state, &t.neg_raw);
            let residual = score(&q, &pos) - score(&q, &neg) - t.teacher_margin;
            Forward { q, pos, neg, residual }
        })
        .collect();

    let l_r = forward.iter().map(|f| f.residual * f.residual).sum::<f64>() / b;
    let l_q = forward
        .iter()
        .map(|f| f.q.iter().map(|a| a.w).sum::<f64>())
        .sum::<f64>()
        / b;
    let doc_vectors: Vec<SparseVector> = forward
        .iter()
        .flat_map(|f| [to_vector(&f.pos), to_vector(&f.neg)])
        .collect();
    let (means, n_docs) = doc_means(doc_vectors.iter());
    let l_d: f64 = means.values().map(|m| m * m).sum();
    let l_t = reg_l_t(t_d, t_q);
    let loss = LossBreakdown::compose(&cfg, l_r, l_q, l_d, l_t);

    let mut grads = Gradients::default();
    let flops_coef = 2.0 * th.lambda_d / n_docs as f64;
    for f in &forward {
        // ∂(mean L_R)/∂residual
        let c = 2.0 * f.residual / b;

        for qa in &f.q {
            let dp = lookup(&f.pos, qa.token).map_or(0.0, |a| ds.value(a.w, t_d, k));
            let dn = lookup(&f.neg, qa.token).map_or(0.0, |a| ds.value(a.w, t_d, k));
            let dl_dw = c * qs.d_dw(qa.w, t_q, k) * (dp - dn) + th.lambda_q / b;
            grads.t_q += c * qs.d_dt(qa.w, t_q, k) * (dp - dn);
            backprop_entry(&mut grads, qa, dl_dw);
        }

        for (docs, sign) in [(&f.pos, 1.0), (&f.neg, -1.0)] {
            for da in docs {
                let qv = lookup(&f.q, da.token).map_or(0.0, |a| qs.value(a.w, t_q, k));
                let mean = means.get(&da.token).copied().unwrap_or(0.0);
                let dl_dw = sign * c * qv * ds.d_dw(da.w, t_d, k) + flops_coef * mean;
                grads.t_d += sign * c * qv * ds.d_dt(da.w, t_d, k);
                backprop_entry(&mut grads, da, dl_dw);
            }
        }
    }
    grads.t_d += th.lambda_t * d_reg_l_t(t_d);
    grads.t_q += th.lambda_t * d_reg_l_t(t_q);

    Ok((loss, grads))
}

/// Analytic gradient of [`super::loss_total`].
pub fn grad_analytic(
    batch: &[TrainingTriple],
    state: &TrainState,
    cfg: &TrainConfig,
) -> Result<Gradients> {
    loss_and_grad(batch, state, cfg).map(|(_, g)| g)
}

/// `θ ← θ - lr · ∂L/∂θ`; thresholds are clamped at zero afterwards.
pub fn sgd_step(state: &TrainState, grads: &Gradients, lr: f64) -> Result<TrainState> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::InvalidParameter(format!("learning rate must be > 0, got {lr}")));
    }
    if !grads.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite gradient at step {}",
            state.step
        )));
    }
    let mut next = state.clone();
    next.t_d = (state.t_d - lr * grads.t_d).max(0.0);
    next.t_q = (state.t_q - lr * grads.t_q).max(0.0);
    for (&token, &(ga, gb)) in &grads.encoder {
        let i = token.index();
        if i >= next.params.vocab_size() {
            return Err(Error::InvalidParameter(format!(
                "gradient for token {token} outside encoder vocabulary"
            )));
        }
        next.params.scale[i] -= lr * ga;
        next.params.bias[i] -= lr * gb;
    }
    if !(next.t_d.is_finite() && next.t_q.is_finite()) || next.params.validate().is_err() {
        return Err(Error::Diverged(format!(
            "parameters overflowed at step {} (learning rate {lr:e})",
            state.step
        )));
    }
    next.step += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::ThresholdConfig;
    use crate::train::loss_total;

    fn sv(id: &str, entries: &[(u32, f64)]) -> SparseVector {
        SparseVector::new(id, entries.iter().map(|&(t, w)| (TokenId(t), w)).collect()).unwrap()
    }

    fn cfg(lambda_t: f64) -> TrainConfig {
        TrainConfig {
            thresholds: ThresholdConfig {
                lambda_q: 0.0,
                lambda_d: 0.0,
                lambda_t,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_gradient_at_mse_minimum() {
        // pos == neg and teacher margin 0: residual is zero everywhere.
        let d = sv("d", &[(1, 1.5), (2, 0.7)]);
        let triple = TrainingTriple::new(sv("q", &[(1, 2.0)]), d.clone(), d.with_id("d2"), 0.0)
            .unwrap();
        let state = TrainState::new(4, 0);
        let g = grad_analytic(&[triple], &state, &cfg(0.0)).unwrap();
        assert_eq!(g.t_d, 0.0);
        assert_eq!(g.t_q, 0.0);
        assert!(g.encoder.values().all(|&(a, b)| a == 0.0 && b == 0.0));
    }

    #[test]
    fn l_t_gradient_at_zero_threshold() {
        let d = sv("d", &[(1, 1.5)]);
        let triple =
            TrainingTriple::new(sv("q", &[(2, 1.0)]), d.clone(), d.with_id("d2"), 0.0).unwrap();
        let state = TrainState::new(4, 0);
        let g = grad_analytic(&[triple], &state, &cfg(1.0)).unwrap();
        assert_eq!(g.t_d, -0.5);
        assert_eq!(g.t_q, -0.5);
    }

    #[test]
    fn loss_matches_forward_pass() {
        let triple = TrainingTriple::new(
            sv("q", &[(1, 2.0), (3, 0.5)]),
            sv("p", &[(1, 1.5), (2, 0.7), (3, 2.0)]),
            sv("n", &[(2, 0.4), (3, 1.0)]),
            0.3,
        )
        .unwrap();
        let mut state = TrainState::new(4, 0);
        state.t_d = 0.4;
        state.t_q = 0.2;
        let c = TrainConfig::default();
        let (loss, _) = loss_and_grad(std::slice::from_ref(&triple), &state, &c).unwrap();
        assert_eq!(loss, loss_total(&[triple], &state, &c).unwrap());
    }

    #[test]
    fn sgd_examples() {
        let state = TrainState {
            t_d: 0.5,
            t_q: 0.05,
            ..TrainState::new(4, 0)
        };
        let same = sgd_step(&state, &Gradients::default(), 0.1).unwrap();
        assert_eq!(same.params, state.params);
        assert_eq!((same.t_d, same.t_q, same.step), (0.5, 0.05, 1));

        let g = Gradients {
            t_d: -1.0,
            t_q: 1.0,
            encoder: BTreeMap::from([(TokenId(2), (0.5, -1.0))]),
        };
        let next = sgd_step(&state, &g, 0.1).unwrap();
        assert!((next.t_d - 0.6).abs() < 1e-15);
        assert_eq!(next.t_q, 0.0);
        assert!((next.params.scale[2] - 0.95).abs() < 1e-15);
        assert!((next.params.bias[2] - 0.1).abs() < 1e-15);

        let bad = Gradients {
            t_d: f64::NAN,
            ..Default::default()
        };
        assert!(matches!(sgd_step(&state, &bad, 0.1), Err(Error::Diverged(_))));
        assert!(sgd_step(&state, &Gradients::default(), 0.0).is_err());
    }
}
