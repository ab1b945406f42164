use serde::{Deserialize, Serialize};

use super::layer::{evaluate_neurons, sumpool_forward, LayerKind, LayerSpec, WeightSegment};
use super::{Clock, Shape, SpikeRecord, SrmError};

/// An ordered stack of feed-forward layers sharing one clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    #[serde(default)]
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub clock: Clock,
    pub num_classes: usize,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>, clock: Clock, num_classes: usize) -> Result<Self, SrmError> {
        let net = Self { name: name.into(), layers, clock, num_classes };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), SrmError> {
        self.clock.validate()?;
        let Some(last) = self.layers.last() else {
            return Err(SrmError::InvalidNetwork("network has no layers".into()));
        };
        for layer in &self.layers {
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].output_shape != pair[1].input_shape {
                return Err(SrmError::InvalidNetwork(format!(
                    "layer `{}` outputs {} but layer `{}` expects {}",
                    pair[0].name, pair[0].output_shape, pair[1].name, pair[1].input_shape
                )));
            }
        }
        if last.kind != LayerKind::Dense || last.output_shape.len() != self.num_classes {
            return Err(SrmError::InvalidNetwork(format!(
                "final layer must be dense with {} neurons",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Shape {
        self.layers[0].input_shape
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }
}

/// Evaluates one layer with its nominal weights and parameters.
pub fn forward_layer(layer: &LayerSpec, input: &SpikeRecord, clock: &Clock) -> Result<SpikeRecord, SrmError> {
    match &layer.params {
        None => sumpool_forward(layer, input),
        Some(params) => {
            let segments = [WeightSegment { start: 0, end: clock.num_steps, weights: layer.nominal_weights() }];
            let rows: Vec<usize> = (0..layer.output_shape.len()).collect();
            let out = evaluate_neurons(layer, params, &segments, input, clock, &rows, false)?;
            SpikeRecord::from_values(layer.output_shape, clock.num_steps, out.spikes)
        }
    }
}

/// Evaluates layers `start..=stop` (0-based) and returns their records.
///
/// With `start > 0`, `seed` must hold the output of layer `start - 1`;
/// otherwise `input` feeds the first layer.
pub fn network_forward(
    net: &Network,
    input: &SpikeRecord,
    start: usize,
    seed: Option<&SpikeRecord>,
    stop: Option<usize>,
) -> Result<Vec<SpikeRecord>, SrmError> {
    let stop = stop.unwrap_or(net.len() - 1);
    if stop >= net.len() || start > stop {
        return Err(SrmError::LayerOutOfRange { index: stop.max(start), len: net.len() });
    }
    let mut current = if start == 0 {
        input
    } else {
        seed.ok_or(SrmError::MissingSeed(start))?
    };
    let mut records: Vec<SpikeRecord> = Vec::with_capacity(stop - start + 1);
    for layer in &net.layers[start..=stop] {
        let next = forward_layer(layer, current, &net.clock)?;
        records.push(next);
        current = records.last().expect("just pushed");
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srm::NeuronParams;

    fn toy_net(weight: f32) -> Network {
        let p = NeuronParams::new(3.0, 2.0, 0.5, 0.0).unwrap();
        let clock = Clock::new(1.0, 25).unwrap();
        let l0 = LayerSpec::conv2d("c1", Shape::new(1, 4, 4), 2, (3, 3), 1, 1, vec![weight; 18], p).unwrap();
        let l1 = LayerSpec::sumpool("p1", Shape::new(2, 4, 4), (2, 2)).unwrap();
        let l2 = LayerSpec::dense("fc", Shape::new(2, 2, 2), 3, vec![weight; 24], p).unwrap();
        Network::new("toy", vec![l0, l1, l2], clock, 3).unwrap()
    }

    fn input() -> SpikeRecord {
        let mut r = SpikeRecord::zeros(Shape::new(1, 4, 4), 25);
        for (n, t) in [(0, 1), (5, 3), (10, 3), (15, 8), (6, 12)] {
            r.set(n, t, 1.0);
        }
        r
    }

    #[test]
    fn zero_weights_silence_everything() {
        let net = toy_net(0.0);
        let records = network_forward(&net, &input(), 0, None, None).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.total() == 0.0));
    }

    #[test]
    fn late_start_from_golden_seed_matches_full_run() {
        let net = toy_net(0.6);
        let full = network_forward(&net, &input(), 0, None, None).unwrap();
        assert!(full[0].total() > 0.0);
        let tail = network_forward(&net, &input(), 2, Some(&full[1]), None).unwrap();
        assert_eq!(tail[0], full[2]);
        let mid = network_forward(&net, &input(), 1, Some(&full[0]), Some(1)).unwrap();
        assert_eq!(mid[0], full[1]);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let net = toy_net(0.6);
        assert!(matches!(network_forward(&net, &input(), 1, None, None), Err(SrmError::MissingSeed(1))));
    }

    #[test]
    fn chain_mismatch_is_rejected() {
        let mut net = toy_net(0.1);
        net.layers[2].input_shape = Shape::flat(8);
        assert!(net.validate().is_err());
    }

    #[test]
    fn final_layer_must_match_classes() {
        let mut net = toy_net(0.1);
        net.num_classes = 4;
        assert!(net.validate().is_err());
    }
}
