use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::threshold::hard;
use crate::vector::SparseVector;

/// How document vectors are pruned before indexing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsifyMode {
    /// Hard threshold at a learned `t_D`.
    Ht(f64),
    /// Keep the `k` largest weights per document.
    TopK(usize),
    /// Document-centric pruning: keep the top `ceil(fraction · nnz)` weights.
    Dcp(f64),
    /// Hard threshold at a hand-picked value. Same output as `Ht`.
    Cut(f64),
    None,
}

impl SparsifyMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SparsifyMode::Ht(t) | SparsifyMode::Cut(t) if !(t.is_finite() && t >= 0.0) => Err(
                Error::InvalidParameter(format!("threshold must be finite and >= 0, got {t}")),
            ),
            SparsifyMode::TopK(0) => Err(Error::InvalidParameter("top-k needs k >= 1".into())),
            SparsifyMode::Dcp(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidParameter(
                format!("DCP fraction must be in (0, 1], got {f}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SparsifyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparsifyMode::Ht(t) => write!(f, "ht:{t}"),
            SparsifyMode::TopK(k) => write!(f, "topk:{k}"),
            SparsifyMode::Dcp(x) => write!(f, "dcp:{x}"),
            SparsifyMode::Cut(t) => write!(f, "cut:{t}"),
            SparsifyMode::None => f.write_str("none"),
        }
    }
}

impl FromStr for SparsifyMode {
    type Err = Error;

    /// `ht:T | topk:K | dcp:F | cut:T | none`
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| {
            Error::InvalidParameter(format!(
                "bad sparsify mode `{s}`: {why} (expected ht:T, topk:K, dcp:F, cut:T or none)"
            ))
        };
        if s == "none" {
            return Ok(SparsifyMode::None);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let real = || arg.parse::<f64>().map_err(|_| bad("argument is not a number"));
        let mode = match kind {
            "ht" => SparsifyMode::Ht(real()?),
            "cut" => SparsifyMode::Cut(real()?),
            "dcp" => SparsifyMode::Dcp(real()?),
            "topk" => SparsifyMode::TopK(arg.parse().map_err(|_| bad("k is not an integer"))?),
            _ => return Err(bad("unknown kind")),
        };
        mode.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(mode)
    }
}

/// Number of entries DCP keeps: `ceil(fraction · nnz)`, with a tolerance of
/// 1e-9 so that e.g. `0.3 · 10` keeps 3 rather than 4.
pub fn dcp_keep_count(fraction: f64, nnz: usize) -> usize {
    if nnz == 0 {
        return 0;
    }
    let keep = (fraction * nnz as f64 - 1e-9).ceil();
    (keep.max(1.0) as usize).min(nnz)
}

/// Keeps the `k` largest weights; equal weights prefer the lower token id.
fn keep_largest(v: &SparseVector, k: usize) -> SparseVector {
    if v.len() <= k {
        return v.clone();
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    let e = v.entries();
    order.sort_by(|&a, &b| e[b].1.total_cmp(&e[a].1).then(e[a].0.cmp(&e[b].0)));
    let mut keep = vec![false; v.len()];
    for &i in &order[..k] {
        keep[i] = true;
    }
    let mut i = 0;
    v.filter(|_, _| {
        let kept = keep[i];
        i += 1;
        kept
    })
}

pub fn sparsify(v: &SparseVector, mode: SparsifyMode) -> SparseVector {
    match mode {
        SparsifyMode::Ht(t) | SparsifyMode::Cut(t) => v.map_weights(|_, w| hard(w, t)),
        SparsifyMode::TopK(k) => keep_largest(v, k),
        SparsifyMode::Dcp(f) => keep_largest(v, dcp_keep_count(f, v.len())),
        SparsifyMode::None => v.clone(),
    }
}
