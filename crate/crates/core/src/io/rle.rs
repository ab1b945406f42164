//! Run-length encoding of spike matrices.

use serde::{Deserialize, Serialize};

/// `(value, repeat count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Run(pub f64, pub u64);

pub fn encode(values: &[f64]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for &v in values {
        match runs.last_mut() {
            Some(Run(last, n)) if last.to_bits() == v.to_bits() => *n += 1,
            _ => runs.push(Run(v, 1)),
        }
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("run-length data expands to {actual} values, expected {expected}")]
pub struct RleLengthError {
    pub expected: usize,
    pub actual: u128,
}

pub fn decode(runs: &[Run], expected: usize) -> Result<Vec<f64>, RleLengthError> {
    let actual: u128 = runs.iter().map(|r| u128::from(r.1)).sum();
    if actual != expected as u128 {
        return Err(RleLengthError { expected, actual });
    }
    let mut out = Vec::with_capacity(expected);
    for &Run(v, n) in runs {
        out.extend(std::iter::repeat_n(v, n as usize));
    }
    Ok(out)
}
