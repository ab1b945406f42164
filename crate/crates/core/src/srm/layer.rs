use serde::{Deserialize, Serialize};

use super::kernel::{KernelKind, SampledKernel};
use super::{Clock, NeuronParams, Shape, SpikeRecord, SrmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d { kernel_h: usize, kernel_w: usize, stride: usize, padding: usize },
    #[serde(rename = "sumpool")]
    SumPool { pool_h: usize, pool_w: usize },
}

/// One feed-forward layer.
///
/// Dense weights are stored `out x in`, row-major. Convolution weights are
/// stored `out_ch x in_ch x kernel_h x kernel_w`. Sum-pooling layers carry
/// neither weights nor neuron parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub input_shape: Shape,
    pub output_shape: Shape,
    #[serde(default)]
    pub weights: Vec<f32>,
    #[serde(default)]
    pub params: Option<NeuronParams>,
    /// Quantizer range for bit-flip faults; the weight min/max when unset.
    #[serde(default)]
    pub quant_range: Option<(f64, f64)>,
}

impl LayerSpec {
    pub fn dense(
        name: impl Into<String>,
        input_shape: Shape,
        outputs: usize,
        weights: Vec<f32>,
        params: NeuronParams,
    ) -> Result<Self, SrmError> {
        let layer = Self {
            name: name.into(),
            kind: LayerKind::Dense,
            input_shape,
            output_shape: Shape::flat(outputs),
            weights,
            params: Some(params),
            quant_range: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        name: impl Into<String>,
        input_shape: Shape,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        weights: Vec<f32>,
        params: NeuronParams,
    ) -> Result<Self, SrmError> {
        let kind = LayerKind::Conv2d { kernel_h: kernel.0, kernel_w: kernel.1, stride, padding };
        let name = name.into();
        let output_shape = conv_output_shape(&name, input_shape, out_channels, kind)?;
        let layer = Self {
            name,
            kind,
            input_shape,
            output_shape,
            weights,
            params: Some(params),
            quant_range: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn sumpool(name: impl Into<String>, input_shape: Shape, window: (usize, usize)) -> Result<Self, SrmError> {
        let kind = LayerKind::SumPool { pool_h: window.0, pool_w: window.1 };
        let name = name.into();
        let output_shape = pool_output_shape(&name, input_shape, window)?;
        let layer = Self {
            name,
            kind,
            input_shape,
            output_shape,
            weights: Vec::new(),
            params: None,
            quant_range: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn has_neurons(&self) -> bool {
        !matches!(self.kind, LayerKind::SumPool { .. })
    }

    pub fn neuron_count(&self) -> usize {
        if self.has_neurons() {
            self.output_shape.len()
        } else {
            0
        }
    }

    pub fn synapse_count(&self) -> usize {
        self.weights.len()
    }

    pub fn expected_weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.output_shape.len() * self.input_shape.len(),
            LayerKind::Conv2d { kernel_h, kernel_w, .. } => {
                self.output_shape.channels * self.input_shape.channels * kernel_h * kernel_w
            }
            LayerKind::SumPool { .. } => 0,
        }
    }

    /// Output shape implied by the input shape and layer hyper-parameters.
    pub fn derived_output_shape(&self) -> Result<Shape, SrmError> {
        match self.kind {
            LayerKind::Dense => Ok(self.output_shape),
            LayerKind::Conv2d { .. } => {
                conv_output_shape(&self.name, self.input_shape, self.output_shape.channels, self.kind)
            }
            LayerKind::SumPool { pool_h, pool_w } => pool_output_shape(&self.name, self.input_shape, (pool_h, pool_w)),
        }
    }

    pub fn validate(&self) -> Result<(), SrmError> {
        let invalid = |reason: String| SrmError::InvalidLayer { layer: self.name.clone(), reason };
        let derived = self.derived_output_shape()?;
        if derived != self.output_shape {
            return Err(invalid(format!(
                "declared output shape {} does not match derived shape {derived}",
                self.output_shape
            )));
        }
        if self.input_shape.is_empty() || self.output_shape.is_empty() {
            return Err(invalid("empty shape".into()));
        }
        if matches!(self.kind, LayerKind::Dense) && (self.output_shape.height != 1 || self.output_shape.width != 1) {
            return Err(invalid(format!("dense output must be flat, got {}", self.output_shape)));
        }
        if self.weights.len() != self.expected_weight_count() {
            return Err(invalid(format!(
                "expected {} weights, got {}",
                self.expected_weight_count(),
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !w.is_finite()) {
            return Err(invalid(format!("non-finite weight {w}")));
        }
        match (&self.params, self.has_neurons()) {
            (Some(p), true) => p.validate()?,
            (None, true) => return Err(invalid("spiking layer requires neuron parameters".into())),
            (Some(_), false) => return Err(invalid("pooling layer cannot carry neuron parameters".into())),
            (None, false) => {}
        }
        if let Some((lo, hi)) = self.quant_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("invalid quantizer range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dense_weight_index(&self, post: usize, pre: usize) -> usize {
        post * self.input_shape.len() + pre
    }

    pub fn kernel_weight_index(&self, out_ch: usize, in_ch: usize, ky: usize, kx: usize) -> Option<usize> {
        match self.kind {
            LayerKind::Conv2d { kernel_h, kernel_w, .. } => {
                if out_ch < self.output_shape.channels && in_ch < self.input_shape.channels && ky < kernel_h && kx < kernel_w {
                    Some(((out_ch * self.input_shape.channels + in_ch) * kernel_h + ky) * kernel_w + kx)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Quantizer range for this layer's weights.
    pub fn weight_range(&self) -> Option<(f64, f64)> {
        if let Some(range) = self.quant_range {
            return Some(range);
        }
        let mut iter = self.weights.iter().map(|w| f64::from(*w));
        let first = iter.next()?;
        Some(iter.fold((first, first), |(lo, hi), w| (lo.min(w), hi.max(w))))
    }

    pub(crate) fn nominal_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| f64::from(*w)).collect()
    }

    /// Calls `f(pre, weight_index)` for every connection into output neuron `post`.
    fn for_each_connection(&self, post: usize, mut f: impl FnMut(usize, usize)) {
        match self.kind {
            LayerKind::Dense => {
                let n_in = self.input_shape.len();
                for pre in 0..n_in {
                    f(pre, post * n_in + pre);
                }
            }
            LayerKind::Conv2d { kernel_h, kernel_w, stride, padding } => {
                let (co, oy, ox) = self.output_shape.coords(post);
                let inp = self.input_shape;
                for ci in 0..inp.channels {
                    for ky in 0..kernel_h {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy as usize >= inp.height {
                            continue;
                        }
                        for kx in 0..kernel_w {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix as usize >= inp.width {
                                continue;
                            }
                            let widx = ((co * inp.channels + ci) * kernel_h + ky) * kernel_w + kx;
                            f(inp.index(ci, iy as usize, ix as usize), widx);
                        }
                    }
                }
            }
            LayerKind::SumPool { .. } => {}
        }
    }
}

fn conv_output_shape(name: &str, input: Shape, out_channels: usize, kind: LayerKind) -> Result<Shape, SrmError> {
    let LayerKind::Conv2d { kernel_h, kernel_w, stride, padding } = kind else {
        unreachable!("conv_output_shape called on a non-conv layer")
    };
    let invalid = |reason: String| SrmError::InvalidLayer { layer: name.to_string(), reason };
    if stride == 0 || kernel_h == 0 || kernel_w == 0 {
        return Err(invalid("kernel and stride must be positive".into()));
    }
    let padded_h = input.height + 2 * padding;
    let padded_w = input.width + 2 * padding;
    if padded_h < kernel_h || padded_w < kernel_w {
        return Err(invalid(format!("kernel {kernel_h}x{kernel_w} larger than padded input {input}")));
    }
    Ok(Shape::new(out_channels, (padded_h - kernel_h) / stride + 1, (padded_w - kernel_w) / stride + 1))
}

fn pool_output_shape(name: &str, input: Shape, (ph, pw): (usize, usize)) -> Result<Shape, SrmError> {
    if ph == 0 || pw == 0 || !input.height.is_multiple_of(ph) || !input.width.is_multiple_of(pw) {
        return Err(SrmError::InvalidLayer {
            layer: name.to_string(),
            reason: format!("input {input} is not divisible by pool window {ph}x{pw}"),
        });
    }
    Ok(Shape::new(input.channels, input.height / ph, input.width / pw))
}

/// Membrane potential of every neuron at every timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneTrace {
    neurons: usize,
    steps: usize,
    values: Vec<f64>,
}

impl MembraneTrace {
    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.values[neuron * self.steps..(neuron + 1) * self.steps]
    }
}

/// Effective weights over the timestamp columns `start..end`.
#[derive(Debug, Clone)]
pub(crate) struct WeightSegment {
    pub start: usize,
    pub end: usize,
    pub weights: Vec<f64>,
}

pub(crate) struct NeuronOutputs {
    /// `rows.len() x steps`, in the order of the requested rows.
    pub spikes: Vec<f64>,
    pub trace: Option<Vec<f64>>,
}

/// Core SRM evaluation of a spiking layer.
///
/// `segments` must tile `0..steps`; each segment supplies the weights used at
/// its timestamps. Per timestamp, connection contributions are summed in a
/// fixed order, so splitting the window into segments never changes the
/// result at columns whose weights are unchanged.
pub(crate) fn evaluate_neurons(
    layer: &LayerSpec,
    params: &NeuronParams,
    segments: &[WeightSegment],
    input: &SpikeRecord,
    clock: &Clock,
    rows: &[usize],
    want_trace: bool,
) -> Result<NeuronOutputs, SrmError> {
    let steps = clock.num_steps;
    input.expect_shape(layer.input_shape, steps)?;
    let eps = SampledKernel::sample(KernelKind::Synaptic, params, clock)?;
    let eta = SampledKernel::sample(KernelKind::Refractory, params, clock)?;

    let filtered = filter_inputs(input, &eps);
    let mut spikes = vec![0.0; rows.len() * steps];
    let mut trace = want_trace.then(|| vec![0.0; rows.len() * steps]);
    let mut psp = vec![0.0; steps];
    let mut refractory = vec![0.0; steps];

    for (slot, &post) in rows.iter().enumerate() {
        psp.iter_mut().for_each(|v| *v = 0.0);
        refractory.iter_mut().for_each(|v| *v = 0.0);
        for seg in segments {
            layer.for_each_connection(post, |pre, widx| {
                let w = seg.weights[widx];
                if w == 0.0 {
                    return;
                }
                let z = &filtered[pre * steps..(pre + 1) * steps];
                for t in seg.start..seg.end {
                    psp[t] += w * z[t];
                }
            });
        }
        let out = &mut spikes[slot * steps..(slot + 1) * steps];
        for t in 0..steps {
            let u = psp[t] + refractory[t] + params.u_rest;
            if !u.is_finite() {
                return Err(SrmError::Overflow(layer.name.clone()));
            }
            if let Some(trace) = trace.as_mut() {
                trace[slot * steps + t] = u;
            }
            if u >= params.theta {
                out[t] = 1.0;
                for (k, e) in eta.values().iter().enumerate() {
                    let at = t + k + 1;
                    if at >= steps {
                        break;
                    }
                    refractory[at] += e;
                }
            }
        }
    }
    Ok(NeuronOutputs { spikes, trace })
}

/// `(eps * S_j)(t)` for every input neuron `j`, sampled on the grid.
fn filter_inputs(input: &SpikeRecord, eps: &SampledKernel) -> Vec<f64> {
    let steps = input.steps();
    let mut filtered = vec![0.0; input.neurons() * steps];
    for pre in 0..input.neurons() {
        let out = &mut filtered[pre * steps..(pre + 1) * steps];
        for (t, &v) in input.row(pre).iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (k, e) in eps.values().iter().enumerate() {
                let at = t + k + 1;
                if at >= steps {
                    break;
                }
                out[at] += v * e;
            }
        }
    }
    filtered
}

/// Runs every neuron of a spiking layer with its nominal weights and parameters.
pub fn simulate_layer_neurons(
    layer: &LayerSpec,
    input: &SpikeRecord,
    clock: &Clock,
) -> Result<(SpikeRecord, MembraneTrace), SrmError> {
    let params = layer.params.as_ref().ok_or_else(|| SrmError::InvalidLayer {
        layer: layer.name.clone(),
        reason: "layer has no spiking neurons".into(),
    })?;
    let segments = [WeightSegment { start: 0, end: clock.num_steps, weights: layer.nominal_weights() }];
    let rows: Vec<usize> = (0..layer.output_shape.len()).collect();
    let out = evaluate_neurons(layer, params, &segments, input, clock, &rows, true)?;
    let record = SpikeRecord::from_values(layer.output_shape, clock.num_steps, out.spikes)?;
    let trace = MembraneTrace {
        neurons: rows.len(),
        steps: clock.num_steps,
        values: out.trace.unwrap_or_default(),
    };
    Ok((record, trace))
}

/// Sums each pooling window per timestamp; no thresholding.
pub fn sumpool_forward(layer: &LayerSpec, input: &SpikeRecord) -> Result<SpikeRecord, SrmError> {
    let LayerKind::SumPool { pool_h, pool_w } = layer.kind else {
        return Err(SrmError::InvalidLayer { layer: layer.name.clone(), reason: "not a pooling layer".into() });
    };
    let out_shape = pool_output_shape(&layer.name, input.shape(), (pool_h, pool_w))?;
    input.expect_shape(layer.input_shape, input.steps())?;
    let steps = input.steps();
    let mut out = SpikeRecord::zeros(out_shape, steps);
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let dst = out_shape.index(c, oy, ox);
                for dy in 0..pool_h {
                    for dx in 0..pool_w {
                        let src = input.shape().index(c, oy * pool_h + dy, ox * pool_w + dx);
                        for t in 0..steps {
                            let v = input.get(src, t);
                            if v != 0.0 {
                                let acc = out.get(dst, t);
                                out.set(dst, t, acc + v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::kernel::eval_kernel;
    use super::*;

    fn params(theta: f64) -> NeuronParams {
        NeuronParams::new(4.0, 2.0, theta, 0.0).unwrap()
    }

    #[test]
    fn zero_input_gives_resting_trace() {
        let clock = Clock::new(1.0, 30).unwrap();
        let p = NeuronParams::new(4.0, 2.0, 1.0, -0.25).unwrap();
        let layer = LayerSpec::dense("d", Shape::flat(3), 2, vec![0.7; 6], p).unwrap();
        let input = SpikeRecord::zeros(Shape::flat(3), 30);
        let (out, trace) = simulate_layer_neurons(&layer, &input, &clock).unwrap();
        assert_eq!(out.total(), 0.0);
        assert!(trace.row(0).iter().chain(trace.row(1)).all(|u| *u == -0.25));
    }

    /// Direct evaluation of the membrane equation for a single input spike.
    fn single_input_oracle(w: f64, p: &NeuronParams, clock: &Clock, spike_col: usize) -> (Vec<f64>, Vec<f64>) {
        let d = clock.num_steps;
        let mut spikes = vec![0.0; d];
        let mut u = vec![0.0; d];
        for j in 0..d {
            let mut v = p.u_rest;
            if j > spike_col {
                v += w * eval_kernel(KernelKind::Synaptic, clock.timestamp_ms(j - spike_col), p).unwrap();
            }
            for m in 0..j {
                if spikes[m] == 1.0 {
                    v += eval_kernel(KernelKind::Refractory, clock.timestamp_ms(j - m), p).unwrap();
                }
            }
            u[j] = v;
            if v >= p.theta {
                spikes[j] = 1.0;
            }
        }
        (spikes, u)
    }

    #[test]
    fn strong_single_input_fires_once() {
        let clock = Clock::new(1.0, 40).unwrap();
        let p = params(1.0);
        let w = 1.5;
        let layer = LayerSpec::dense("d", Shape::flat(1), 1, vec![w as f32], p).unwrap();
        let mut input = SpikeRecord::zeros(Shape::flat(1), 40);
        input.set(0, 0, 1.0);
        let (out, trace) = simulate_layer_neurons(&layer, &input, &clock).unwrap();
        let (oracle_spikes, oracle_u) = single_input_oracle(w, &p, &clock, 0);
        assert_eq!(out.row(0), oracle_spikes.as_slice());
        assert_eq!(out.total(), 1.0);
        let first = (0..40)
            .find(|&j| j > 0 && w * eval_kernel(KernelKind::Synaptic, clock.timestamp_ms(j), &p).unwrap() >= p.theta)
            .unwrap();
        assert_eq!(out.get(0, first), 1.0);
        for (a, b) in trace.row(0).iter().zip(&oracle_u) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sub_threshold_input_tracks_kernel() {
        let clock = Clock::new(1.0, 40).unwrap();
        let p = NeuronParams::new(4.0, 2.0, 1.0, 0.1).unwrap();
        let w = 0.8;
        let layer = LayerSpec::dense("d", Shape::flat(1), 1, vec![w as f32], p).unwrap();
        let mut input = SpikeRecord::zeros(Shape::flat(1), 40);
        input.set(0, 0, 1.0);
        let (out, trace) = simulate_layer_neurons(&layer, &input, &clock).unwrap();
        assert_eq!(out.total(), 0.0);
        let w = f64::from(w as f32);
        for j in 0..40 {
            let expected = 0.1 + w * eval_kernel(KernelKind::Synaptic, clock.timestamp_ms(j), &p).unwrap();
            assert!((trace.row(0)[j] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let clock = Clock::new(1.0, 10).unwrap();
        let layer = LayerSpec::dense("d", Shape::flat(3), 1, vec![0.0; 3], params(1.0)).unwrap();
        let input = SpikeRecord::zeros(Shape::flat(4), 10);
        assert!(matches!(simulate_layer_neurons(&layer, &input, &clock), Err(SrmError::ShapeMismatch { .. })));
    }

    #[test]
    fn sumpool_sums_windows() {
        let layer = LayerSpec::sumpool("p", Shape::new(1, 4, 4), (2, 2)).unwrap();
        let mut input = SpikeRecord::zeros(Shape::new(1, 4, 4), 8);
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            input.set(input.shape().index(0, y, x), 4, 1.0);
        }
        input.set(input.shape().index(0, 3, 2), 2, 1.0);
        let out = sumpool_forward(&layer, &input).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 2, 2));
        assert_eq!(out.get(0, 4), 4.0);
        assert_eq!(out.get(3, 2), 1.0);
        assert_eq!(out.total(), 5.0);

        let zeros = sumpool_forward(&layer, &SpikeRecord::zeros(Shape::new(1, 4, 4), 8)).unwrap();
        assert_eq!(zeros.total(), 0.0);
    }

    #[test]
    fn sumpool_requires_divisible_input() {
        assert!(LayerSpec::sumpool("p", Shape::new(1, 5, 4), (2, 2)).is_err());
    }

    #[test]
    fn conv_shape_arithmetic() {
        let p = params(1.0);
        let layer = LayerSpec::conv2d("c", Shape::new(2, 8, 8), 3, (3, 3), 1, 1, vec![0.1; 54], p).unwrap();
        assert_eq!(layer.output_shape, Shape::new(3, 8, 8));
        let layer = LayerSpec::conv2d("c", Shape::new(2, 8, 8), 3, (3, 3), 2, 0, vec![0.1; 54], p).unwrap();
        assert_eq!(layer.output_shape, Shape::new(3, 3, 3));
        assert!(LayerSpec::conv2d("c", Shape::new(2, 8, 8), 3, (3, 3), 1, 0, vec![0.1; 10], p).is_err());
    }

    #[test]
    fn conv_matches_equivalent_dense() {
        // A 1x1 conv over one channel is a per-pixel dense map with a shared weight.
        let clock = Clock::new(1.0, 20).unwrap();
        let p = params(0.5);
        let conv = LayerSpec::conv2d("c", Shape::new(1, 2, 2), 1, (1, 1), 1, 0, vec![0.9], p).unwrap();
        let mut dense_w = vec![0.0f32; 16];
        for i in 0..4 {
            dense_w[i * 4 + i] = 0.9;
        }
        let dense = LayerSpec::dense("d", Shape::new(1, 2, 2), 4, dense_w, p).unwrap();
        let mut input = SpikeRecord::zeros(Shape::new(1, 2, 2), 20);
        input.set(1, 3, 1.0);
        input.set(2, 7, 1.0);
        let (a, _) = simulate_layer_neurons(&conv, &input, &clock).unwrap();
        let (b, _) = simulate_layer_neurons(&dense, &SpikeRecord::from_values(Shape::new(1, 2, 2), 20, input.values().to_vec()).unwrap(), &clock).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn graded_input_scales_linearly() {
        let clock = Clock::new(1.0, 30).unwrap();
        let p = NeuronParams::new(4.0, 2.0, 100.0, 0.0).unwrap();
        let layer = LayerSpec::dense("d", Shape::flat(1), 1, vec![0.5], p).unwrap();
        let mut one = SpikeRecord::zeros(Shape::flat(1), 30);
        one.set(0, 2, 1.0);
        let mut three = one.clone();
        three.set(0, 2, 3.0);
        let (_, t1) = simulate_layer_neurons(&layer, &one, &clock).unwrap();
        let (_, t3) = simulate_layer_neurons(&layer, &three, &clock).unwrap();
        for (a, b) in t1.row(0).iter().zip(t3.row(0)) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }
}
