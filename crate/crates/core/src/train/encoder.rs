use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{Collection, SparseVector, TokenId};

/// Per-token affine parameters of the desk-scale encoder:
/// `w_j = log(1 + ReLU(scale_j · x_j + bias_j))` for a raw feature `x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoderParams {
    pub scale: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyEncoderParams {
    /// Identity-like start: `scale = 1`, `bias = 0`, so `w = log(1 + x)`.
    pub fn new(vocab_size: u32) -> Self {
        ToyEncoderParams {
            scale: vec![1.0; vocab_size as usize],
            bias: vec![0.0; vocab_size as usize],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.scale.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.len() != self.bias.len() {
            return Err(Error::InvalidParameter(format!(
                "encoder scale/bias length mismatch: {} vs {}",
                self.scale.len(),
                self.bias.len()
            )));
        }
        if let Some(i) = self
            .scale
            .iter()
            .chain(&self.bias)
            .position(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "non-finite encoder parameter at flat index {i}"
            )));
        }
        Ok(())
    }

    /// Pre-activation `scale_j · x + bias_j`.
    #[inline]
    pub fn affine(&self, token: TokenId, x: f64) -> f64 {
        self.scale[token.index()] * x + self.bias[token.index()]
    }
}

/// Encodes a raw feature vector. Entries whose pre-activation is `<= 0`
/// saturate to zero and are dropped.
pub fn encode_toy(params: &ToyEncoderParams, raw: &SparseVector) -> SparseVector {
    raw.map_weights(|t, x| params.affine(t, x).max(0.0).ln_1p())
}

/// Encodes every vector of a raw collection.
pub fn encode_collection(params: &ToyEncoderParams, raw: &Collection) -> Collection {
    raw.map(|v| encode_toy(params, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(token: u32, x: f64) -> SparseVector {
        SparseVector::new("r", vec![(TokenId(token), x)]).unwrap()
    }

    #[test]
    fn examples() {
        let mut p = ToyEncoderParams::new(8);
        // x = 0 is never stored in a raw vector; an explicit zero is dropped
        // on construction and would encode to log1p(0) = 0 regardless.
        let zero = SparseVector::new("r", vec![(TokenId(1), 0.0)]).unwrap();
        assert!(encode_toy(&p, &zero).is_empty());
        assert_eq!(p.affine(TokenId(1), 0.0).max(0.0).ln_1p(), 0.0);

        let e = encode_toy(&p, &one(1, std::f64::consts::E - 1.0));
        assert!((e.get(TokenId(1)).unwrap() - 1.0).abs() < 1e-15);

        p.scale[2] = -1.0;
        assert!(encode_toy(&p, &one(2, 5.0)).is_empty());
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = ToyEncoderParams::new(4);
        assert!(p.validate().is_ok());
        p.bias[3] = f64::INFINITY;
        assert!(p.validate().is_err());
        p.bias.pop();
        assert!(p.validate().is_err());
    }
}
