use serde::{Deserialize, Serialize};

use super::SrmError;
use crate::io::rle::{self, Run};

/// Neuron grid of a layer: `channels x height x width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// A flat vector of `n` neurons.
    pub const fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, channel: usize, y: usize, x: usize) -> bool {
        channel < self.channels && y < self.height && x < self.width
    }

    /// Flattened neuron index of `(channel, y, x)`.
    pub const fn index(&self, channel: usize, y: usize, x: usize) -> usize {
        (channel * self.height + y) * self.width + x
    }

    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.width;
        let y = (index / self.width) % self.height;
        let c = index / (self.width * self.height);
        (c, y, x)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Per-layer spike matrix: one row per neuron, one column per timestamp.
///
/// Neuron outputs are binary; sum-pooling produces integer counts and
/// stuck-at faults may write arbitrary reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RecordRepr", try_from = "RecordRepr")]
pub struct SpikeRecord {
    shape: Shape,
    steps: usize,
    values: Vec<f64>,
}

impl SpikeRecord {
    pub fn zeros(shape: Shape, steps: usize) -> Self {
        Self { shape, steps, values: vec![0.0; shape.len() * steps] }
    }

    pub fn from_values(shape: Shape, steps: usize, values: Vec<f64>) -> Result<Self, SrmError> {
        if values.len() != shape.len() * steps {
            return Err(SrmError::ShapeMismatch {
                expected: format!("{} values ({shape} x {steps})", shape.len() * steps),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self { shape, steps, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn neurons(&self) -> usize {
        self.shape.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, neuron: usize, step: usize) -> f64 {
        self.values[neuron * self.steps + step]
    }

    pub fn set(&mut self, neuron: usize, step: usize, value: f64) {
        self.values[neuron * self.steps + step] = value;
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.values[neuron * self.steps..(neuron + 1) * self.steps]
    }

    pub fn row_mut(&mut self, neuron: usize) -> &mut [f64] {
        &mut self.values[neuron * self.steps..(neuron + 1) * self.steps]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Row sums, i.e. per-neuron spike counts over the window.
    pub fn spike_counts(&self) -> Vec<f64> {
        (0..self.neurons()).map(|n| self.row(n).iter().sum()).collect()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0 || *v == 1.0)
    }

    /// Elementwise 1-norm of `self - other`.
    pub fn l1_distance(&self, other: &SpikeRecord) -> Result<f64, SrmError> {
        self.expect_shape(other.shape, other.steps)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum())
    }

    pub(crate) fn expect_shape(&self, shape: Shape, steps: usize) -> Result<(), SrmError> {
        if self.shape != shape || self.steps != steps {
            return Err(SrmError::ShapeMismatch {
                expected: format!("{shape} x {steps}"),
                actual: format!("{} x {}", self.shape, self.steps),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    shape: Shape,
    steps: usize,
    runs: Vec<Run>,
}

impl From<SpikeRecord> for RecordRepr {
    fn from(record: SpikeRecord) -> Self {
        Self { shape: record.shape, steps: record.steps, runs: rle::encode(&record.values) }
    }
}

impl TryFrom<RecordRepr> for SpikeRecord {
    type Error = String;

    fn try_from(repr: RecordRepr) -> Result<Self, Self::Error> {
        let expected = repr
            .shape
            .len()
            .checked_mul(repr.steps)
            .ok_or_else(|| "record dimensions overflow".to_string())?;
        let values = rle::decode(&repr.runs, expected).map_err(|e| e.to_string())?;
        SpikeRecord::from_values(repr.shape, repr.steps, values).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_index_round_trips() {
        let shape = Shape::new(3, 4, 5);
        for i in 0..shape.len() {
            let (c, y, x) = shape.coords(i);
            assert_eq!(shape.index(c, y, x), i);
        }
    }

    #[test]
    fn l1_distance_requires_matching_shape() {
        let a = SpikeRecord::zeros(Shape::flat(3), 4);
        let mut b = a.clone();
        b.set(1, 2, 1.0);
        assert_eq!(a.l1_distance(&b).unwrap(), 1.0);
        let c = SpikeRecord::zeros(Shape::flat(2), 4);
        assert!(a.l1_distance(&c).is_err());
    }

    #[test]
    fn json_form_is_run_length_encoded() {
        let mut r = SpikeRecord::zeros(Shape::new(2, 2, 2), 10);
        r.set(3, 4, 1.0);
        r.set(7, 9, 0.5);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.len() < 120, "{json}");
        let back: SpikeRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn deserializing_wrong_length_fails() {
        let json = r#"{"shape":{"channels":1,"height":1,"width":2},"steps":3,"runs":[[0.0,5]]}"#;
        assert!(serde_json::from_str::<SpikeRecord>(json).is_err());
    }
}
