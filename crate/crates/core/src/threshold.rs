//! Soft, hard and sigmoid thresholding of token weights, their derivatives,
//! and the index approximation error incurred when a model trained with the
//! sigmoid surrogate is indexed with the exact hard threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::SparseVector;

/// Logistic function, branching on sign so neither branch overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `S(w, t) = ReLU(w - t)`.
#[inline]
pub fn soft(w: f64, t: f64) -> f64 {
    (w - t).max(0.0)
}

/// `H(w, t) = w` if `w >= t`, else 0. The boundary is kept.
#[inline]
pub fn hard(w: f64, t: f64) -> f64 {
    if w >= t {
        w
    } else {
        0.0
    }
}

/// `Ĥ(w, t) = w · σ(K(w - t))`.
#[inline]
pub fn sigmoid_ht(w: f64, t: f64, k: f64) -> f64 {
    w * sigmoid(k * (w - t))
}

/// Index approximation error `|Ĥ(w, t) - H(w, t)|`.
///
/// Both branches (`w < t`: `Ĥ`; `w >= t`: `w - Ĥ`) reduce to
/// `w / (1 + e^{K|w - t|})`, which is evaluated directly: no cancellation,
/// and non-increasing in `K` under floating point as well.
#[inline]
pub fn approx_error(w: f64, t: f64, k: f64) -> f64 {
    w / (1.0 + (k * (w - t).abs()).exp())
}

/// Closed-form upper bound on [`approx_error`] from `1 + x <= e^x`:
/// `w / (2 + K|w - t|)`.
#[inline]
pub fn error_bound(w: f64, t: f64, k: f64) -> f64 {
    if w < t {
        w / (2.0 + k * (t - w))
    } else {
        w / (2.0 + k * (w - t))
    }
}

/// `∂Ĥ/∂w = σ + K·w·σ(1 - σ)` with `σ = σ(K(w - t))`.
#[inline]
pub fn d_sigmoid_ht_dw(w: f64, t: f64, k: f64) -> f64 {
    let s = sigmoid(k * (w - t));
    s + k * w * s * (1.0 - s)
}

/// `∂Ĥ/∂t = -K·w·σ(1 - σ)`.
#[inline]
pub fn d_sigmoid_ht_dt(w: f64, t: f64, k: f64) -> f64 {
    let s = sigmoid(k * (w - t));
    -k * w * s * (1.0 - s)
}

/// Subgradient of `S` in `w`; zero at the kink.
#[inline]
pub fn d_soft_dw(w: f64, t: f64) -> f64 {
    if w > t {
        1.0
    } else {
        0.0
    }
}

/// Subgradient of `S` in `t`; zero at the kink.
#[inline]
pub fn d_soft_dt(w: f64, t: f64) -> f64 {
    if w > t {
        -1.0
    } else {
        0.0
    }
}

/// Threshold regularizer `L_T = log(1 + e^{-t_D}) + log(1 + e^{-t_Q})`.
pub fn reg_l_t(t_d: f64, t_q: f64) -> f64 {
    softplus(-t_d) + softplus(-t_q)
}

/// `∂L_T/∂t = -e^{-t} / (1 + e^{-t})`, always negative.
pub fn d_reg_l_t(t: f64) -> f64 {
    -sigmoid(-t)
}

/// Thresholds, sigmoid steepness and loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub t_d: f64,
    pub t_q: f64,
    /// Steepness of the sigmoid step approximation.
    pub k: f64,
    pub lambda_q: f64,
    pub lambda_d: f64,
    pub lambda_t: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            t_d: 0.0,
            t_q: 0.0,
            k: 25.0,
            lambda_q: 0.01,
            lambda_d: 0.008,
            lambda_t: 1.0,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidParameter(format!("{what} must be finite and >= 0, got {v}")))
        };
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidParameter(format!("K must be > 0, got {}", self.k)));
        }
        for (what, v) in [
            ("t_D", self.t_d),
            ("t_Q", self.t_q),
            ("lambda_Q", self.lambda_q),
            ("lambda_D", self.lambda_d),
            ("lambda_T", self.lambda_t),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(what, v);
            }
        }
        Ok(())
    }
}

/// Elementwise thresholding function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdFn {
    Soft,
    Hard,
    Sigmoid { k: f64 },
}

impl ThresholdFn {
    #[inline]
    pub fn apply(self, w: f64, t: f64) -> f64 {
        match self {
            ThresholdFn::Soft => soft(w, t),
            ThresholdFn::Hard => hard(w, t),
            ThresholdFn::Sigmoid { k } => sigmoid_ht(w, t, k),
        }
    }
}

/// Thresholds every weight of `v`. Exact zeros are dropped; the sigmoid
/// variant is positive wherever `w > 0`, so its output keeps the full input
/// support (barring underflow).
pub fn apply_thresholding(v: &SparseVector, f: ThresholdFn, t: f64) -> SparseVector {
    v.map_weights(|_, w| f.apply(w, t))
}

/// Thresholding applied to one side (queries or documents) during training.
///
/// `Phi` leaves weights untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideThresholding {
    Phi,
    Soft,
    Sigmoid,
}

impl SideThresholding {
    #[inline]
    pub fn value(self, w: f64, t: f64, k: f64) -> f64 {
        match self {
            SideThresholding::Phi => w,
            SideThresholding::Soft => soft(w, t),
            SideThresholding::Sigmoid => sigmoid_ht(w, t, k),
        }
    }

    #[inline]
    pub fn d_dw(self, w: f64, t: f64, k: f64) -> f64 {
        match self {
            SideThresholding::Phi => 1.0,
            SideThresholding::Soft => d_soft_dw(w, t),
            SideThresholding::Sigmoid => d_sigmoid_ht_dw(w, t, k),
        }
    }

    #[inline]
    pub fn d_dt(self, w: f64, t: f64, k: f64) -> f64 {
        match self {
            SideThresholding::Phi => 0.0,
            SideThresholding::Soft => d_soft_dt(w, t),
            SideThresholding::Sigmoid => d_sigmoid_ht_dt(w, t, k),
        }
    }

    /// Whether a weight survives this side's thresholding once applied with
    /// its exact (index/inference time) counterpart: sigmoid becomes hard.
    #[inline]
    pub fn survives(self, w: f64, t: f64) -> bool {
        match self {
            SideThresholding::Phi => w > 0.0,
            SideThresholding::Soft => w > t,
            SideThresholding::Sigmoid => w > 0.0 && w >= t,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "phi" | "none" => Some(SideThresholding::Phi),
            "soft" | "s" => Some(SideThresholding::Soft),
            "sigmoid" | "hh" => Some(SideThresholding::Sigmoid),
            _ => None,
        }
    }
}
