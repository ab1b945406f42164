use serde::{Deserialize, Serialize};

use super::FaultError;

/// Unsigned affine `width`-bit quantizer over `[w_min, w_max]`.
///
/// Codes span `0..=2^width - 1`; `w_min` maps to code 0 and `w_max` to the
/// top code. Rounding is half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub width: u32,
    pub w_min: f64,
    pub w_max: f64,
}

impl Quantizer {
    pub fn new(width: u32, w_min: f64, w_max: f64) -> Result<Self, FaultError> {
        let q = Self { width, w_min, w_max };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        if !(1..=32).contains(&self.width) {
            return Err(FaultError::InvalidQuantizer(format!("width must be 1..=32 bits, got {}", self.width)));
        }
        if !(self.w_min.is_finite() && self.w_max.is_finite() && self.w_min < self.w_max) {
            return Err(FaultError::InvalidQuantizer(format!(
                "range [{}, {}] must be finite with min < max",
                self.w_min, self.w_max
            )));
        }
        Ok(())
    }

    pub fn max_code(&self) -> u32 {
        (((1u64) << self.width) - 1) as u32
    }

    /// Width of one quantization step.
    pub fn step(&self) -> f64 {
        (self.w_max - self.w_min) / f64::from(self.max_code())
    }

    /// Whether `w` lies inside the representable range.
    pub fn contains(&self, w: f64) -> bool {
        self.w_min <= w && w <= self.w_max
    }

    /// Code of `w`, clamping out-of-range values to the range first.
    pub fn quantize(&self, w: f64) -> u32 {
        let clamped = w.clamp(self.w_min, self.w_max);
        let scaled = (clamped - self.w_min) / (self.w_max - self.w_min) * f64::from(self.max_code());
        (scaled.round() as u64).min(u64::from(self.max_code())) as u32
    }

    pub fn dequantize(&self, code: u32) -> f64 {
        self.w_min + f64::from(code) * self.step()
    }

    /// Flips the bits of `mask` in the code of `w` and converts back.
    pub fn flip(&self, w: f64, mask: u32) -> f64 {
        self.dequantize((self.quantize(w) ^ mask) & self.max_code())
    }
}
