mod common;

use common::{epsilon, oracle_forward, oracle_layer, random_input, random_network, rows_of};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snnfi_core::srm::{eval_kernel, forward_layer, network_forward, simulate_layer_neurons, KernelKind};
use snnfi_core::{Clock, LayerSpec, Network, NeuronParams, Shape, SpikeRecord};

fn single_input(steps: usize, col: usize) -> SpikeRecord {
    let mut r = SpikeRecord::zeros(Shape::flat(1), steps);
    r.set(0, col, 1.0);
    r
}

#[test]
fn strong_single_input_fires_once_where_oracle_says() {
    let clock = Clock::new(1.0, 60).unwrap();
    let p = NeuronParams::new(5.0, 4.0, 1.0, 0.0).unwrap();
    let layer = LayerSpec::dense("d", Shape::flat(1), 1, vec![1.5], p).unwrap();
    let input = single_input(60, 3);
    let (out, trace) = simulate_layer_neurons(&layer, &input, &clock).unwrap();

    // first column where w * eps(t - t_1) >= theta
    let first = (4..60).find(|&j| 1.5 * epsilon((j - 3) as f64, 5.0) >= 1.0).unwrap();
    let expected: Vec<f64> = (0..60).map(|j| if j == first { 1.0 } else { 0.0 }).collect();
    assert_eq!(out.row(0), expected.as_slice());

    let (oracle_spikes, oracle_trace) = oracle_layer(&layer, &rows_of(&input), &clock);
    assert_eq!(oracle_spikes[0], expected);
    for (a, b) in trace.row(0).iter().zip(&oracle_trace.unwrap()[0]) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn weak_single_input_traces_the_kernel() {
    let clock = Clock::new(0.5, 80).unwrap();
    let p = NeuronParams::new(3.0, 2.0, 1.0, -0.1).unwrap();
    let layer = LayerSpec::dense("d", Shape::flat(1), 1, vec![0.75], p).unwrap();
    let (out, trace) = simulate_layer_neurons(&layer, &single_input(80, 10), &clock).unwrap();
    assert_eq!(out.total(), 0.0);
    for (j, u) in trace.row(0).iter().enumerate() {
        let lag = (j as f64 - 10.0) * 0.5;
        let expected = -0.1 + 0.75 * epsilon(lag, 3.0);
        assert!((u - expected).abs() < 1e-9, "column {j}: {u} vs {expected}");
    }
}

#[test]
fn sumpool_examples() {
    let layer = LayerSpec::sumpool("p", Shape::new(1, 2, 2), (2, 2)).unwrap();
    let mut input = SpikeRecord::zeros(Shape::new(1, 2, 2), 8);
    for n in 0..4 {
        input.set(n, 4, 1.0);
    }
    input.set(1, 2, 1.0);
    let out = snnfi_core::srm::sumpool_forward(&layer, &input).unwrap();
    assert_eq!(out.get(0, 4), 4.0);
    assert_eq!(out.get(0, 2), 1.0);
    assert_eq!(out.total(), 5.0);
    assert!(LayerSpec::sumpool("p", Shape::new(1, 3, 2), (2, 2)).is_err());
}

#[test]
fn zero_weights_give_silent_network() {
    let clock = Clock::new(1.0, 30).unwrap();
    let p = NeuronParams::new(2.0, 2.0, 0.5, 0.0).unwrap();
    let l0 = LayerSpec::dense("a", Shape::flat(5), 4, vec![0.0; 20], p).unwrap();
    let l1 = LayerSpec::dense("b", Shape::flat(4), 3, vec![0.0; 12], p).unwrap();
    let net = Network::new("z", vec![l0, l1], clock, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = random_input(&mut rng, Shape::flat(5), 30, 0.5);
    let recs = network_forward(&net, &input, 0, None, None).unwrap();
    assert!(recs.iter().all(|r| r.total() == 0.0));
    let seeded = network_forward(&net, &input, 1, Some(&recs[0]), None).unwrap();
    assert_eq!(seeded[0], recs[1]);
    assert!(network_forward(&net, &input, 1, None, None).is_err());
}

#[test]
fn chained_layers_compose_bit_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let net = random_network(&mut rng, 50, 3);
        let input = random_input(&mut rng, net.input_shape(), 50, 0.2);
        let full = network_forward(&net, &input, 0, None, None).unwrap();
        let mut current = input.clone();
        for (l, layer) in net.layers.iter().enumerate() {
            current = forward_layer(layer, &current, &net.clock).unwrap();
            assert_eq!(current, full[l]);
            let tail = network_forward(&net, &input, l, if l == 0 { None } else { Some(&full[l - 1]) }, None).unwrap();
            assert_eq!(tail.last(), full.last());
        }
        let oracle = oracle_forward(&net, &input);
        assert_eq!(rows_of(full.last().unwrap()), *oracle.last().unwrap());
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let clock = Clock::new(1.0, 10).unwrap();
    let p = NeuronParams::new(2.0, 2.0, 0.5, 0.0).unwrap();
    let layer = LayerSpec::dense("a", Shape::flat(5), 4, vec![0.1; 20], p).unwrap();
    assert!(forward_layer(&layer, &SpikeRecord::zeros(Shape::flat(4), 10), &clock).is_err());
    assert!(forward_layer(&layer, &SpikeRecord::zeros(Shape::flat(5), 11), &clock).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_have_fixed_sign(lag in -10.0f64..200.0, tau_s in 0.1f64..20.0, tau_ref in 0.1f64..20.0, theta in 0.01f64..5.0) {
        let p = NeuronParams::new(tau_s, tau_ref, theta, 0.0).unwrap();
        prop_assert!(eval_kernel(KernelKind::Synaptic, lag, &p).unwrap() >= 0.0);
        prop_assert!(eval_kernel(KernelKind::Refractory, lag, &p).unwrap() <= 0.0);
    }

    #[test]
    fn output_is_causal(seed in any::<u64>(), cut in 1usize..39) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, 40, 2);
        let a = random_input(&mut rng, net.input_shape(), 40, 0.2);
        let mut b = a.clone();
        for n in 0..b.neurons() {
            for t in cut..40 {
                b.set(n, t, 1.0 - a.get(n, t));
            }
        }
        let ra = network_forward(&net, &a, 0, None, None).unwrap();
        let rb = network_forward(&net, &b, 0, None, None).unwrap();
        // spiking layers delay by at least one column, pools by none
        for (x, y) in ra.iter().zip(&rb) {
            for n in 0..x.neurons() {
                prop_assert_eq!(&x.row(n)[..cut], &y.row(n)[..cut]);
            }
        }
    }

    #[test]
    fn higher_threshold_never_fires_earlier(seed in any::<u64>(), theta in 0.2f64..2.0, scale in 1.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clock = Clock::new(1.0, 60).unwrap();
        let weights = common::random_weights(&mut rng, 8, -0.2, 1.0);
        let input = random_input(&mut rng, Shape::flat(8), 60, 0.2);
        let first_spike = |theta: f64| {
            let p = NeuronParams::new(4.0, 3.0, theta, 0.0).unwrap();
            let layer = LayerSpec::dense("d", Shape::flat(8), 1, weights.clone(), p).unwrap();
            let (out, _) = simulate_layer_neurons(&layer, &input, &clock).unwrap();
            out.row(0).iter().position(|v| *v > 0.0).unwrap_or(usize::MAX)
        };
        prop_assert!(first_spike(theta) <= first_spike(theta * scale));
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, 40, 3);
        let input = random_input(&mut rng, net.input_shape(), 40, 0.2);
        let a = network_forward(&net, &input, 0, None, None).unwrap();
        let b = network_forward(&net, &input, 0, None, None).unwrap();
        prop_assert_eq!(a, b);
    }
}
