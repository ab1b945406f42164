//! Campaign configuration files (TOML).
//!
//! ```toml
//! format_version = 1
//! model = "net.toml"
//! dataset = "data.toml"
//!
//! [options]
//! early_stop = true
//!
//! [[rounds]]
//! [[rounds.faults]]
//! model = { kind = "dead_neuron" }
//! sites = [{ kind = "neuron", layer = "fc1", channel = 3 }]
//! duration = { t1 = 10, t2 = 40 }
//!
//! [[rounds]]
//! complete = { model = { kind = "dead_synapse" }, layer = 2 }
//! ```
//!
//! Layers may be referred to by index or by name. Paths are relative to the
//! configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_version, load_dataset, load_network, read_text, sibling, FormatError};
use crate::campaign::{Campaign, CampaignOptions, DroppedFault, Sample};
use crate::fault::{Coord, Fault, FaultDuration, FaultModel, FaultSite, SiteScope};
use crate::srm::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerRef {
    Index(usize),
    Name(String),
}

impl LayerRef {
    fn resolve(&self, net: &Network) -> Option<usize> {
        match self {
            Self::Index(i) => Some(*i),
            Self::Name(name) => net.layer_index(name),
        }
    }
}

impl std::fmt::Display for LayerRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Index(i) => write!(f, "{i}"),
            Self::Name(n) => write!(f, "`{n}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SiteSpec {
    Neuron {
        layer: LayerRef,
        #[serde(default)]
        channel: usize,
        #[serde(default)]
        y: usize,
        #[serde(default)]
        x: usize,
    },
    /// Dense synapse; `post` and `pre` are `[channel, y, x]`.
    Synapse { layer: LayerRef, post: [usize; 3], pre: [usize; 3] },
    Kernel { layer: LayerRef, out_ch: usize, in_ch: usize, ky: usize, kx: usize },
}

impl SiteSpec {
    fn layer(&self) -> &LayerRef {
        match self {
            Self::Neuron { layer, .. } | Self::Synapse { layer, .. } | Self::Kernel { layer, .. } => layer,
        }
    }

    fn resolve(&self, layer: usize) -> FaultSite {
        let coord = |c: &[usize; 3]| Coord::new(c[0], c[1], c[2]);
        match self {
            Self::Neuron { channel, y, x, .. } => FaultSite::neuron(layer, *channel, *y, *x),
            Self::Synapse { post, pre, .. } => FaultSite::synapse(layer, coord(post), coord(pre)),
            Self::Kernel { out_ch, in_ch, ky, kx, .. } => FaultSite::kernel(layer, *out_ch, *in_ch, *ky, *kx),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    /// A layer reference, or the string `"network"`.
    pub scope: LayerRef,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub t1: usize,
    pub t2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub model: FaultModel,
    #[serde(default)]
    pub sites: Vec<SiteSpec>,
    #[serde(default)]
    pub random: Option<RandomSpec>,
    #[serde(default)]
    pub duration: Option<Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteSpec {
    pub model: FaultModel,
    pub layer: LayerRef,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Expands into one single-fault round per element of a layer.
    #[serde(default)]
    pub complete: Option<CompleteSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub format_version: u32,
    pub model: PathBuf,
    pub dataset: PathBuf,
    #[serde(default)]
    pub options: CampaignOptions,
    #[serde(default)]
    pub rounds: Vec<RoundConfig>,
}

/// A configured round with layer names resolved to indices.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedRound {
    Faults(Vec<Fault>),
    Complete { model: FaultModel, layer: usize },
}

pub fn parse_campaign_config(text: &str, context: &str) -> Result<CampaignConfig, FormatError> {
    let config: CampaignConfig = toml::from_str(text).map_err(|e| FormatError::parse(context, e))?;
    check_version(config.format_version)?;
    Ok(config)
}

/// Reads a configuration and makes `model` and `dataset` absolute-ish
/// (relative to the configuration file's directory).
pub fn load_campaign_config(path: &Path) -> Result<CampaignConfig, FormatError> {
    let mut config = parse_campaign_config(&read_text(path)?, &path.display().to_string())?;
    config.model = sibling(path, &config.model);
    config.dataset = sibling(path, &config.dataset);
    Ok(config)
}

impl CampaignConfig {
    /// Resolves layer references; faults naming unknown layers are dropped.
    pub fn resolve(&self, net: &Network) -> (Vec<ResolvedRound>, Vec<DroppedFault>) {
        let mut rounds = Vec::new();
        let mut dropped = Vec::new();
        for (index, round) in self.rounds.iter().enumerate() {
            let mut faults = Vec::new();
            for spec in &round.faults {
                match resolve_fault(spec, net) {
                    Ok(f) => faults.push(f),
                    Err(reason) => dropped.push(DroppedFault {
                        round: Some(index),
                        model: spec.model.name().to_string(),
                        sites: Vec::new(),
                        reason,
                    }),
                }
            }
            if !faults.is_empty() || round.complete.is_none() {
                rounds.push(ResolvedRound::Faults(faults));
            }
            if let Some(complete) = &round.complete {
                match complete.layer.resolve(net) {
                    Some(layer) => rounds.push(ResolvedRound::Complete { model: complete.model.clone(), layer }),
                    None => dropped.push(DroppedFault {
                        round: Some(index),
                        model: complete.model.name().to_string(),
                        sites: Vec::new(),
                        reason: format!("no such layer {}", complete.layer),
                    }),
                }
            }
        }
        (rounds, dropped)
    }
}

fn resolve_fault(spec: &FaultSpec, net: &Network) -> Result<Fault, String> {
    let mut sites = Vec::with_capacity(spec.sites.len());
    for site in &spec.sites {
        let layer = site.layer().resolve(net).ok_or_else(|| format!("no such layer {}", site.layer()))?;
        sites.push(site.resolve(layer));
    }
    if let Some(random) = &spec.random {
        let scope = match &random.scope {
            LayerRef::Name(n) if n == "network" => SiteScope::Network,
            other => SiteScope::Layer(other.resolve(net).ok_or_else(|| format!("no such layer {other}"))?),
        };
        sites.extend(std::iter::repeat_n(FaultSite::Random { scope }, random.count));
    }
    if sites.is_empty() {
        return Err("fault has no sites".into());
    }
    let duration = match spec.duration {
        Some(w) => FaultDuration::transient(w.t1, w.t2),
        None => FaultDuration::Permanent,
    };
    Ok(Fault::new(spec.model.clone(), sites).with_duration(duration))
}

/// Everything needed to run a configured campaign.
#[derive(Debug, Clone)]
pub struct LoadedCampaign {
    pub config: CampaignConfig,
    pub network: Network,
    pub campaign: Campaign,
    pub dataset: Vec<Sample>,
    /// Faults dropped while resolving the configuration.
    pub dropped: Vec<DroppedFault>,
}

/// Loads a configuration, its network and dataset, and builds the campaign.
pub fn parse_campaign(path: &Path) -> Result<LoadedCampaign, FormatError> {
    let config = load_campaign_config(path)?;
    let network = load_network(&config.model)?;
    let dataset = load_dataset(&config.dataset, &network.clock)?;
    let (rounds, dropped) = config.resolve(&network);
    let mut campaign = Campaign::new(std::sync::Arc::new(network.clone()), config.options.clone());
    for round in rounds {
        match round {
            ResolvedRound::Faults(faults) => campaign.then_inject(faults),
            ResolvedRound::Complete { model, layer } => {
                campaign.inject_complete(model, layer);
            }
        }
    }
    Ok(LoadedCampaign { config, network, campaign, dataset, dropped })
}
