use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Fault, FaultError, Quantizer};
use crate::srm::{LayerKind, Network};

/// Neuron coordinates within a layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub channel: usize,
    pub y: usize,
    pub x: usize,
}

impl Coord {
    pub fn new(channel: usize, y: usize, x: usize) -> Self {
        Self { channel, y, x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteScope {
    Layer(usize),
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Neuron,
    Synapse,
}

/// Location of a fault.
///
/// Layer indices are 0-based. Dense synapses are addressed by their pre- and
/// post-synaptic neurons (the pre neuron lives in the layer's input); a
/// convolution synapse is one shared kernel weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSite {
    Neuron { layer: usize, channel: usize, y: usize, x: usize },
    Synapse { layer: usize, post: Coord, pre: Coord },
    Kernel { layer: usize, out_ch: usize, in_ch: usize, ky: usize, kx: usize },
    /// Awaiting random assignment during campaign preparation.
    Random { scope: SiteScope },
}

impl FaultSite {
    pub fn neuron(layer: usize, channel: usize, y: usize, x: usize) -> Self {
        Self::Neuron { layer, channel, y, x }
    }

    /// Neuron `index` of a flat (dense) layer.
    pub fn flat_neuron(layer: usize, index: usize) -> Self {
        Self::Neuron { layer, channel: index, y: 0, x: 0 }
    }

    pub fn synapse(layer: usize, post: Coord, pre: Coord) -> Self {
        Self::Synapse { layer, post, pre }
    }

    pub fn kernel(layer: usize, out_ch: usize, in_ch: usize, ky: usize, kx: usize) -> Self {
        Self::Kernel { layer, out_ch, in_ch, ky, kx }
    }

    pub fn layer(&self) -> Option<usize> {
        match *self {
            Self::Neuron { layer, .. } | Self::Synapse { layer, .. } | Self::Kernel { layer, .. } => Some(layer),
            Self::Random { scope: SiteScope::Layer(layer) } => Some(layer),
            Self::Random { .. } => None,
        }
    }

    pub fn kind(&self) -> Option<SiteKind> {
        match self {
            Self::Neuron { .. } => Some(SiteKind::Neuron),
            Self::Synapse { .. } | Self::Kernel { .. } => Some(SiteKind::Synapse),
            Self::Random { .. } => None,
        }
    }

    /// Flat element index inside its layer: neuron index or weight index.
    pub(crate) fn resolve(&self, net: &Network) -> Result<(usize, usize), String> {
        let layer_idx = self.layer().ok_or_else(|| "site awaits random assignment".to_string())?;
        let layer = net.layers.get(layer_idx).ok_or_else(|| "no such layer".to_string())?;
        let oob = || "coordinates out of bounds".to_string();
        match *self {
            Self::Neuron { channel, y, x, .. } => {
                if !layer.has_neurons() {
                    return Err("no neurons in pooling layer".into());
                }
                if !layer.output_shape.contains(channel, y, x) {
                    return Err(oob());
                }
                Ok((layer_idx, layer.output_shape.index(channel, y, x)))
            }
            Self::Synapse { post, pre, .. } => match layer.kind {
                LayerKind::Dense => {
                    if !layer.output_shape.contains(post.channel, post.y, post.x)
                        || !layer.input_shape.contains(pre.channel, pre.y, pre.x)
                    {
                        return Err(oob());
                    }
                    let post = layer.output_shape.index(post.channel, post.y, post.x);
                    let pre = layer.input_shape.index(pre.channel, pre.y, pre.x);
                    Ok((layer_idx, layer.dense_weight_index(post, pre)))
                }
                LayerKind::Conv2d { .. } => Err("convolution synapses are addressed by kernel sites".into()),
                LayerKind::SumPool { .. } => Err("no synapses in pooling layer".into()),
            },
            Self::Kernel { out_ch, in_ch, ky, kx, .. } => match layer.kind {
                LayerKind::Conv2d { .. } => {
                    layer.kernel_weight_index(out_ch, in_ch, ky, kx).map(|w| (layer_idx, w)).ok_or_else(oob)
                }
                LayerKind::Dense => Err("kernel site on a dense layer".into()),
                LayerKind::SumPool { .. } => Err("no synapses in pooling layer".into()),
            },
            Self::Random { .. } => unreachable!("handled above"),
        }
    }
}

/// Outcome of checking a fault against a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteCheck {
    Valid,
    Dropped(String),
}

/// Checks model parameters, duration, and every site of `fault` against `net`.
///
/// Random sites are checked only for an existing, compatible scope; their
/// concrete location is drawn later.
pub fn validate_site(net: &Network, fault: &Fault) -> SiteCheck {
    match check(net, fault) {
        Ok(()) => SiteCheck::Valid,
        Err(reason) => SiteCheck::Dropped(reason),
    }
}

fn check(net: &Network, fault: &Fault) -> Result<(), String> {
    fault.model.validate().map_err(|e| e.to_string())?;
    fault.duration.validate(net.clock.num_steps).map_err(|e| e.to_string())?;
    if fault.sites.is_empty() {
        return Err("fault has no sites".into());
    }
    let wanted = if fault.model.target().is_neuron() { SiteKind::Neuron } else { SiteKind::Synapse };
    for site in &fault.sites {
        match site {
            FaultSite::Random { scope } => {
                if candidate_count(net, *scope, wanted).map_err(|e| e.to_string())? == 0 {
                    return Err(match wanted {
                        SiteKind::Neuron => "no neurons in pooling layer".into(),
                        SiteKind::Synapse => "no synapses in pooling layer".into(),
                    });
                }
            }
            concrete => {
                let (layer, _) = concrete.resolve(net)?;
                if concrete.kind() != Some(wanted) {
                    return Err(format!(
                        "site kind does not match fault target of `{}`",
                        fault.model.name()
                    ));
                }
                if let Some(width) = bitflip_width(fault) {
                    layer_quantizer(net, layer, width).map_err(|e| e.to_string())?;
                }
            }
        }
    }
    Ok(())
}

fn bitflip_width(fault: &Fault) -> Option<u32> {
    match fault.model {
        super::FaultModel::BitflipSynapse { width, .. } => Some(width),
        _ => None,
    }
}

/// Quantizer for bit-flips in `layer`: configured range or weight min/max.
pub(crate) fn layer_quantizer(net: &Network, layer: usize, width: u32) -> Result<Quantizer, FaultError> {
    let spec = net.layers.get(layer).ok_or(FaultError::NoSuchLayer(layer))?;
    let (lo, hi) = spec
        .weight_range()
        .ok_or_else(|| FaultError::InvalidQuantizer(format!("layer `{}` has no weights", spec.name)))?;
    Quantizer::new(width, lo, hi)
}

fn scope_layers(net: &Network, scope: SiteScope) -> Result<std::ops::Range<usize>, FaultError> {
    match scope {
        SiteScope::Network => Ok(0..net.len()),
        SiteScope::Layer(l) if l < net.len() => Ok(l..l + 1),
        SiteScope::Layer(l) => Err(FaultError::NoSuchLayer(l)),
    }
}

fn elements(net: &Network, layer: usize, kind: SiteKind) -> usize {
    let spec = &net.layers[layer];
    match kind {
        SiteKind::Neuron => spec.neuron_count(),
        SiteKind::Synapse => spec.synapse_count(),
    }
}

pub(crate) fn candidate_count(net: &Network, scope: SiteScope, kind: SiteKind) -> Result<usize, FaultError> {
    Ok(scope_layers(net, scope)?.map(|l| elements(net, l, kind)).sum())
}

/// Site of the `index`-th element of `kind` in `layer`.
pub(crate) fn element_site(net: &Network, layer: usize, kind: SiteKind, index: usize) -> FaultSite {
    let spec = &net.layers[layer];
    match kind {
        SiteKind::Neuron => {
            let (channel, y, x) = spec.output_shape.coords(index);
            FaultSite::neuron(layer, channel, y, x)
        }
        SiteKind::Synapse => match spec.kind {
            LayerKind::Conv2d { kernel_h, kernel_w, .. } => {
                let kx = index % kernel_w;
                let ky = (index / kernel_w) % kernel_h;
                let in_ch = (index / (kernel_w * kernel_h)) % spec.input_shape.channels;
                let out_ch = index / (kernel_w * kernel_h * spec.input_shape.channels);
                FaultSite::kernel(layer, out_ch, in_ch, ky, kx)
            }
            _ => {
                let n_in = spec.input_shape.len();
                let (pc, py, px) = spec.output_shape.coords(index / n_in);
                let (ic, iy, ix) = spec.input_shape.coords(index % n_in);
                FaultSite::synapse(layer, Coord::new(pc, py, px), Coord::new(ic, iy, ix))
            }
        },
    }
}

/// Draws `count` distinct sites uniformly from `scope`, deterministically in `seed`.
pub fn assign_random_sites(
    net: &Network,
    scope: SiteScope,
    kind: SiteKind,
    count: usize,
    seed: u64,
) -> Result<Vec<FaultSite>, FaultError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_sites(net, scope, kind, count, &mut rng)
}

pub(crate) fn sample_sites<R: Rng + ?Sized>(
    net: &Network,
    scope: SiteScope,
    kind: SiteKind,
    count: usize,
    rng: &mut R,
) -> Result<Vec<FaultSite>, FaultError> {
    let layers = scope_layers(net, scope)?;
    let sizes: Vec<(usize, usize)> = layers.map(|l| (l, elements(net, l, kind))).collect();
    let available: usize = sizes.iter().map(|(_, n)| n).sum();
    if count > available {
        return Err(FaultError::NotEnoughCandidates { requested: count, available });
    }
    let mut picks = rand::seq::index::sample(rng, available, count).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|mut i| {
            for &(layer, n) in &sizes {
                if i < n {
                    return element_site(net, layer, kind, i);
                }
                i -= n;
            }
            unreachable!("index below candidate total")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::FaultModel;
    use crate::srm::{Clock, LayerSpec, NeuronParams, Shape};
    use std::collections::HashSet;

    fn net() -> Network {
        let p = NeuronParams::new(3.0, 2.0, 1.0, 0.0).unwrap();
        let clock = Clock::new(1.0, 10).unwrap();
        let c1 = LayerSpec::conv2d("SC1", Shape::new(2, 4, 4), 2, (3, 3), 1, 1, vec![0.1; 36], p).unwrap();
        let p1 = LayerSpec::sumpool("SP1", Shape::new(2, 4, 4), (2, 2)).unwrap();
        let f1 = LayerSpec::dense("SF1", Shape::new(2, 2, 2), 6, (0..48).map(|i| i as f32 / 48.0).collect(), p).unwrap();
        let f2 = LayerSpec::dense("SF2", Shape::flat(6), 10, vec![0.2; 60], p).unwrap();
        Network::new("t", vec![c1, p1, f1, f2], clock, 10).unwrap()
    }

    #[test]
    fn neuron_site_validation() {
        let net = net();
        let ok = Fault::at(FaultModel::DeadNeuron, FaultSite::neuron(0, 1, 3, 3));
        assert_eq!(validate_site(&net, &ok), SiteCheck::Valid);
        let missing = Fault::at(FaultModel::DeadNeuron, FaultSite::neuron(9, 0, 0, 0));
        assert_eq!(validate_site(&net, &missing), SiteCheck::Dropped("no such layer".into()));
        let pool = Fault::at(FaultModel::DeadNeuron, FaultSite::neuron(1, 0, 0, 0));
        assert_eq!(validate_site(&net, &pool), SiteCheck::Dropped("no neurons in pooling layer".into()));
        let oob = Fault::at(FaultModel::DeadNeuron, FaultSite::neuron(0, 0, 4, 0));
        assert!(matches!(validate_site(&net, &oob), SiteCheck::Dropped(_)));
    }

    #[test]
    fn target_and_site_kind_must_agree() {
        let net = net();
        let f = Fault::at(FaultModel::DeadSynapse, FaultSite::neuron(0, 0, 0, 0));
        assert!(matches!(validate_site(&net, &f), SiteCheck::Dropped(r) if r.contains("does not match")));
        let f = Fault::at(FaultModel::DeadNeuron, FaultSite::kernel(0, 0, 0, 0, 0));
        assert!(matches!(validate_site(&net, &f), SiteCheck::Dropped(_)));
        let f = Fault::at(FaultModel::DeadSynapse, FaultSite::kernel(2, 0, 0, 0, 0));
        assert!(matches!(validate_site(&net, &f), SiteCheck::Dropped(_)));
        let f = Fault::at(FaultModel::DeadSynapse, FaultSite::synapse(3, Coord::new(9, 0, 0), Coord::new(5, 0, 0)));
        assert_eq!(validate_site(&net, &f), SiteCheck::Valid);
    }

    #[test]
    fn random_sites_are_distinct_and_deterministic() {
        let net = net();
        let a = assign_random_sites(&net, SiteScope::Network, SiteKind::Neuron, 4, 7).unwrap();
        let b = assign_random_sites(&net, SiteScope::Network, SiteKind::Neuron, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 4);
        for s in &a {
            let f = Fault::at(FaultModel::DeadNeuron, *s);
            assert_eq!(validate_site(&net, &f), SiteCheck::Valid);
        }
    }

    #[test]
    fn exhausting_a_layer_yields_every_site() {
        let net = net();
        let sites = assign_random_sites(&net, SiteScope::Layer(3), SiteKind::Neuron, 10, 1).unwrap();
        let expected: HashSet<_> = (0..10).map(|i| FaultSite::flat_neuron(3, i)).collect();
        assert_eq!(sites.into_iter().collect::<HashSet<_>>(), expected);
        assert!(matches!(
            assign_random_sites(&net, SiteScope::Layer(3), SiteKind::Neuron, 11, 1),
            Err(FaultError::NotEnoughCandidates { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn element_sites_cover_weights_exactly_once() {
        let net = net();
        for layer in [0, 2, 3] {
            let n = net.layers[layer].synapse_count();
            let idx: HashSet<usize> =
                (0..n).map(|i| element_site(&net, layer, SiteKind::Synapse, i).resolve(&net).unwrap().1).collect();
            assert_eq!(idx, (0..n).collect());
        }
    }

    #[test]
    fn pooling_scope_has_no_candidates() {
        let net = net();
        let f = Fault::random(FaultModel::DeadNeuron, SiteScope::Layer(1), 1);
        assert!(matches!(validate_site(&net, &f), SiteCheck::Dropped(_)));
    }

    #[test]
    fn degenerate_quantizer_range_drops_bitflip() {
        let net = net();
        let f = Fault::at(
            FaultModel::BitflipSynapse { bits: vec![7], width: 8 },
            FaultSite::synapse(3, Coord::new(0, 0, 0), Coord::new(0, 0, 0)),
        );
        assert!(matches!(validate_site(&net, &f), SiteCheck::Dropped(r) if r.contains("quantizer")));
        let f = Fault::at(
            FaultModel::BitflipSynapse { bits: vec![7], width: 8 },
            FaultSite::synapse(2, Coord::new(0, 0, 0), Coord::new(0, 0, 0)),
        );
        assert_eq!(validate_site(&net, &f), SiteCheck::Valid);
    }
}
