//! Shared fixtures and a brute-force SRM reference for integration tests.
#![allow(dead_code)]

use rand::Rng;
use snnfi_core::fault::{Coord, SiteScope};
use snnfi_core::{
    Clock, Fault, FaultDuration, FaultModel, FaultSite, LayerKind, LayerSpec, Network, NeuronParams, Sample, Shape,
    SpikeRecord,
};

pub fn epsilon(s: f64, tau_s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        s / tau_s * (1.0 - s / tau_s).exp()
    }
}

pub fn eta(s: f64, tau_ref: f64, theta: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        -2.0 * theta * s / tau_ref * (1.0 - s / tau_ref).exp()
    }
}

/// Brute-force evaluation of one layer: full-history convolution at every
/// timestamp, no kernel truncation. Returns output values and, for spiking
/// layers, the membrane potential of each neuron (`neurons x steps`).
pub fn oracle_layer(layer: &LayerSpec, input: &[Vec<f64>], clock: &Clock) -> (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
    let d = clock.num_steps;
    let period = clock.period_ms;
    let inp = layer.input_shape;
    let out = layer.output_shape;
    match layer.kind {
        LayerKind::SumPool { pool_h, pool_w } => {
            let mut rows = vec![vec![0.0; d]; out.len()];
            for c in 0..out.channels {
                for oy in 0..out.height {
                    for ox in 0..out.width {
                        let o = (c * out.height + oy) * out.width + ox;
                        for dy in 0..pool_h {
                            for dx in 0..pool_w {
                                let i = (c * inp.height + oy * pool_h + dy) * inp.width + ox * pool_w + dx;
                                for t in 0..d {
                                    rows[o][t] += input[i][t];
                                }
                            }
                        }
                    }
                }
            }
            (rows, None)
        }
        _ => {
            let p = layer.params.expect("spiking layer");
            // z_i(t_j) = sum over every earlier spike of eps(t_j - t_k)
            let filtered: Vec<Vec<f64>> = input
                .iter()
                .map(|row| {
                    (0..d)
                        .map(|j| (0..j).map(|k| row[k] * epsilon((j - k) as f64 * period, p.tau_s)).sum())
                        .collect()
                })
                .collect();
            let mut spikes = vec![vec![0.0; d]; out.len()];
            let mut trace = vec![vec![0.0; d]; out.len()];
            for o in 0..out.len() {
                let conns = connections(layer, o);
                for j in 0..d {
                    let psp: f64 = conns.iter().map(|&(i, w)| w * filtered[i][j]).sum();
                    let refr: f64 =
                        (0..j).map(|k| spikes[o][k] * eta((j - k) as f64 * period, p.tau_ref, p.theta)).sum();
                    let u = psp + refr + p.u_rest;
                    trace[o][j] = u;
                    if u >= p.theta {
                        spikes[o][j] = 1.0;
                    }
                }
            }
            (spikes, Some(trace))
        }
    }
}

/// `(input neuron, weight)` pairs feeding output neuron `o`.
fn connections(layer: &LayerSpec, o: usize) -> Vec<(usize, f64)> {
    let inp = layer.input_shape;
    let out = layer.output_shape;
    match layer.kind {
        LayerKind::Dense => (0..inp.len()).map(|i| (i, f64::from(layer.weights[o * inp.len() + i]))).collect(),
        LayerKind::Conv2d { kernel_h, kernel_w, stride, padding } => {
            let oc = o / (out.height * out.width);
            let oy = (o / out.width) % out.height;
            let ox = o % out.width;
            let mut v = Vec::new();
            for ic in 0..inp.channels {
                for ky in 0..kernel_h {
                    for kx in 0..kernel_w {
                        let iy = (oy * stride + ky) as i64 - padding as i64;
                        let ix = (ox * stride + kx) as i64 - padding as i64;
                        if iy < 0 || ix < 0 || iy >= inp.height as i64 || ix >= inp.width as i64 {
                            continue;
                        }
                        let i = (ic * inp.height + iy as usize) * inp.width + ix as usize;
                        let w = layer.weights[((oc * inp.channels + ic) * kernel_h + ky) * kernel_w + kx];
                        v.push((i, f64::from(w)));
                    }
                }
            }
            v
        }
        LayerKind::SumPool { .. } => unreachable!(),
    }
}

pub fn rows_of(record: &SpikeRecord) -> Vec<Vec<f64>> {
    (0..record.neurons()).map(|n| record.row(n).to_vec()).collect()
}

/// Brute-force forward pass; one output matrix per layer.
pub fn oracle_forward(net: &Network, input: &SpikeRecord) -> Vec<Vec<Vec<f64>>> {
    let mut current = rows_of(input);
    let mut all = Vec::new();
    for layer in &net.layers {
        let (out, _) = oracle_layer(layer, &current, &net.clock);
        all.push(out.clone());
        current = out;
    }
    all
}

pub fn random_params(rng: &mut impl Rng) -> NeuronParams {
    NeuronParams::new(rng.random_range(1.0..8.0), rng.random_range(1.0..6.0), rng.random_range(0.3..1.5), 0.0).unwrap()
}

pub fn random_weights(rng: &mut impl Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// A random network of at most `max_layers` layers with at most 64 neurons per layer.
///
/// The last layer is always dense; earlier layers may be convolutions or
/// sum-pools over small feature maps.
pub fn random_network(rng: &mut impl Rng, steps: usize, max_layers: usize) -> Network {
    let clock = Clock::new(rng.random_range(0.5..2.0), steps).unwrap();
    let classes = rng.random_range(2..6);
    let n_layers = rng.random_range(1..=max_layers);
    let mut layers = Vec::new();
    let mut shape = if rng.random_bool(0.5) {
        Shape::new(rng.random_range(1..3), 4, 4)
    } else {
        Shape::flat(rng.random_range(3..20))
    };
    let input = shape;
    for i in 0..n_layers - 1 {
        let spatial = shape.height > 1 || shape.width > 1;
        let name = format!("l{i}");
        let layer = if spatial && rng.random_bool(0.3) && shape.height % 2 == 0 && shape.width % 2 == 0 {
            LayerSpec::sumpool(name, shape, (2, 2)).unwrap()
        } else if spatial {
            let out_ch = rng.random_range(1..4);
            // same-size or shrinking maps keep every layer within 64 neurons
            let k = rng.random_range(1..=3.min(shape.height.min(shape.width)));
            let pad = usize::from(k == 3);
            let n = out_ch * shape.channels * k * k;
            LayerSpec::conv2d(name, shape, out_ch, (k, k), 1, pad, random_weights(rng, n, -0.3, 1.2), random_params(rng))
                .unwrap()
        } else {
            let outs = rng.random_range(2..=64);
            let n = outs * shape.len();
            LayerSpec::dense(name, shape, outs, random_weights(rng, n, -0.3, 1.0), random_params(rng)).unwrap()
        };
        shape = layer.output_shape;
        layers.push(layer);
    }
    let n = classes * shape.len();
    layers.push(LayerSpec::dense("out", shape, classes, random_weights(rng, n, -0.3, 1.0), random_params(rng)).unwrap());
    let net = Network::new("random", layers, clock, classes).unwrap();
    assert_eq!(net.input_shape(), input);
    net
}

pub fn random_input(rng: &mut impl Rng, shape: Shape, steps: usize, rate: f64) -> SpikeRecord {
    let mut r = SpikeRecord::zeros(shape, steps);
    for n in 0..shape.len() {
        for t in 0..steps {
            if rng.random_bool(rate) {
                r.set(n, t, 1.0);
            }
        }
    }
    r
}

pub fn random_dataset(rng: &mut impl Rng, net: &Network, samples: usize) -> Vec<Sample> {
    (0..samples)
        .map(|_| Sample {
            input: random_input(rng, net.input_shape(), net.clock.num_steps, 0.15),
            label: rng.random_range(0..net.num_classes),
        })
        .collect()
}

fn random_neuron_site(rng: &mut impl Rng, net: &Network) -> Option<FaultSite> {
    let candidates: Vec<usize> = (0..net.len()).filter(|&l| net.layers[l].has_neurons()).collect();
    let l = candidates[rng.random_range(0..candidates.len())];
    let s = net.layers[l].output_shape;
    Some(FaultSite::neuron(l, rng.random_range(0..s.channels), rng.random_range(0..s.height), rng.random_range(0..s.width)))
}

fn random_synapse_site(rng: &mut impl Rng, net: &Network) -> Option<FaultSite> {
    let candidates: Vec<usize> = (0..net.len()).filter(|&l| net.layers[l].has_neurons()).collect();
    let l = candidates[rng.random_range(0..candidates.len())];
    let layer = &net.layers[l];
    let pick = |rng: &mut dyn rand::RngCore, s: Shape| {
        Coord::new(rng.random_range(0..s.channels), rng.random_range(0..s.height), rng.random_range(0..s.width))
    };
    Some(match layer.kind {
        LayerKind::Conv2d { kernel_h, kernel_w, .. } => FaultSite::kernel(
            l,
            rng.random_range(0..layer.output_shape.channels),
            rng.random_range(0..layer.input_shape.channels),
            rng.random_range(0..kernel_h),
            rng.random_range(0..kernel_w),
        ),
        _ => FaultSite::synapse(l, pick(rng, layer.output_shape), pick(rng, layer.input_shape)),
    })
}

pub fn random_model(rng: &mut impl Rng) -> FaultModel {
    match rng.random_range(0..10) {
        0 => FaultModel::DeadNeuron,
        1 => FaultModel::SaturatedNeuron,
        2 => FaultModel::StuckAt { x: f64::from(rng.random_range(0..3u8)) },
        3 => FaultModel::Integration { rho: rng.random_range(0.2..3.0) },
        4 => FaultModel::Refractory { rho: rng.random_range(0.2..3.0) },
        5 => FaultModel::Threshold { rho: rng.random_range(0.2..2.0) },
        6 => FaultModel::DeadSynapse,
        7 => FaultModel::SaturatedSynapse { value: rng.random_range(-5.0..10.0) },
        8 => FaultModel::PerturbedSynapse { rho: rng.random_range(-2.0..3.0) },
        _ => FaultModel::BitflipSynapse { bits: vec![rng.random_range(0..8)], width: 8 },
    }
}

/// A random fault with concrete sites (or a random-site placeholder when
/// `allow_random`), and a random duration.
pub fn random_fault(rng: &mut impl Rng, net: &Network, allow_random: bool) -> Fault {
    let model = random_model(rng);
    let n_sites = rng.random_range(1..=2);
    let sites = (0..n_sites)
        .map(|_| {
            if allow_random && rng.random_bool(0.2) {
                let scope = if rng.random_bool(0.5) { SiteScope::Network } else { SiteScope::Layer(net.len() - 1) };
                FaultSite::Random { scope }
            } else if model.target().is_neuron() {
                random_neuron_site(rng, net).unwrap()
            } else {
                random_synapse_site(rng, net).unwrap()
            }
        })
        .collect();
    let d = net.clock.num_steps;
    let duration = if rng.random_bool(0.3) {
        let t1 = rng.random_range(1..=d);
        FaultDuration::transient(t1, rng.random_range(t1..=d))
    } else {
        FaultDuration::Permanent
    };
    Fault::new(model, sites).with_duration(duration)
}

/// Ten inputs plus one always-on bias input feeding ten outputs. Sample `k`
/// drives input `k`; every output also hears the bias, so non-target
/// outputs fire at an identical, lower rate.
pub fn separable_task(samples_per_class: usize) -> (Network, Vec<Sample>) {
    let steps = 100;
    let clock = Clock::new(1.0, steps).unwrap();
    let p = NeuronParams::new(4.0, 4.0, 1.0, 0.0).unwrap();
    let n_in = 11;
    let mut w = vec![0.0f32; 10 * n_in];
    for o in 0..10 {
        w[o * n_in + o] = 1.0;
        w[o * n_in + 10] = 0.6;
    }
    let layer = LayerSpec::dense("out", Shape::flat(n_in), 10, w, p).unwrap();
    let net = Network::new("separable", vec![layer], clock, 10).unwrap();
    let mut samples = Vec::new();
    for k in 0..10 {
        for rep in 0..samples_per_class {
            let mut input = SpikeRecord::zeros(Shape::flat(n_in), steps);
            for t in (rep % 2..steps).step_by(3) {
                input.set(k, t, 1.0);
            }
            for t in (0..steps).step_by(6) {
                input.set(10, t, 1.0);
            }
            samples.push(Sample { input, label: k });
        }
    }
    (net, samples)
}

/// Five dense layers of four neurons with strong excitatory weights.
pub fn chain5() -> (Network, Vec<Sample>) {
    let steps = 40;
    let clock = Clock::new(1.0, steps).unwrap();
    let p = NeuronParams::new(3.0, 3.0, 1.0, 0.0).unwrap();
    let layers = (0..5)
        .map(|i| LayerSpec::dense(format!("fc{i}"), Shape::flat(4), 4, vec![0.9; 16], p).unwrap())
        .collect();
    let net = Network::new("chain", layers, clock, 4).unwrap();
    let mut input = SpikeRecord::zeros(Shape::flat(4), steps);
    for t in (0..steps).step_by(2) {
        input.set(0, t, 1.0);
        input.set(2, t, 1.0);
    }
    (net, vec![Sample { input, label: 0 }])
}
