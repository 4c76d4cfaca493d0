use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Impact quantization: `bits == 0` stores exact `f64` weights; 8 or 16
/// stores `floor(w / global_max · (2^bits - 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub bits: u8,
    pub global_max: f64,
}

impl QuantizationSpec {
    pub fn new(bits: u8, global_max: f64) -> Result<Self> {
        if !matches!(bits, 0 | 8 | 16) {
            return Err(Error::InvalidParameter(format!(
                "quantization bits must be 0, 8 or 16, got {bits}"
            )));
        }
        if !(global_max.is_finite() && global_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "global max must be finite and > 0, got {global_max}"
            )));
        }
        Ok(QuantizationSpec { bits, global_max })
    }

    pub fn is_exact(&self) -> bool {
        self.bits == 0
    }

    /// `2^bits - 1`.
    pub fn levels(&self) -> u32 {
        ((1u64 << self.bits) - 1) as u32
    }

    /// Width of one quantization step.
    pub fn step(&self) -> f64 {
        self.global_max / self.levels() as f64
    }

    /// Largest `q` with `dequantize(q) <= w`, i.e. the floor of the scaled
    /// weight corrected for rounding.
    pub fn quantize(&self, w: f64) -> Result<u32> {
        if self.is_exact() {
            return Err(Error::InvalidParameter("quantize called on exact spec".into()));
        }
        if !(w >= 0.0 && w <= self.global_max) {
            return Err(Error::OutOfRange {
                weight: w,
                global_max: self.global_max,
            });
        }
        let levels = self.levels();
        let mut q = ((w / self.global_max * levels as f64).floor() as u32).min(levels);
        while q > 0 && self.dequantize(q) > w {
            q -= 1;
        }
        while q < levels && self.dequantize(q + 1) <= w {
            q += 1;
        }
        Ok(q)
    }

    #[inline]
    pub fn dequantize(&self, q: u32) -> f64 {
        q as f64 / self.levels() as f64 * self.global_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s8 = QuantizationSpec::new(8, 2.0).unwrap();
        assert_eq!(s8.quantize(0.0).unwrap(), 0);
        assert_eq!(s8.quantize(2.0).unwrap(), 255);
        assert_eq!(s8.quantize(0.5).unwrap(), 63);
        let s16 = QuantizationSpec::new(16, 1.0).unwrap();
        assert_eq!(s16.quantize(1.0).unwrap(), 65535);
        assert!(matches!(s8.quantize(2.5), Err(Error::OutOfRange { .. })));
        assert!(s8.quantize(-0.1).is_err());
        assert!(QuantizationSpec::new(4, 1.0).is_err());
        assert!(QuantizationSpec::new(8, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn error_bound(bits in prop::sample::select(vec![8u8, 16]), gm in 0.01f64..50.0, frac in 0.0f64..=1.0) {
            let spec = QuantizationSpec::new(bits, gm).unwrap();
            let w = (frac * gm).min(gm);
            let q = spec.quantize(w).unwrap();
            let back = spec.dequantize(q);
            prop_assert!(back <= w);
            prop_assert!(w - back < spec.step());
        }
    }
}
