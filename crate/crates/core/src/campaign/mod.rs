//! Fault-injection campaigns.
//!
//! A [`Campaign`] collects fault rounds through [`Campaign::inject`],
//! [`Campaign::then_inject`] and [`Campaign::inject_complete`]. Running it
//! prepares the rounds (validation, random-site assignment, sorting by layer),
//! then walks the dataset in batches: one golden run per batch, followed by
//! every round in turn. Rounds never share state.

mod decode;
mod engine;
mod plan;

pub use decode::{decode_rate, early_stop_check};
pub use engine::{golden_run, run_round, GoldenCache, RoundOutcome};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fault::{
    candidate_count, element_site, sample_sites, validate_site, Fault, FaultError, FaultModel, FaultSite, SiteCheck,
    SiteKind, SiteScope,
};
use crate::srm::{Network, SpikeRecord, SrmError};

pub const RESULTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Srm(#[from] SrmError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("golden cache holds {cached} layers, network has {expected}")]
    MissingCache { cached: usize, expected: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("unresolved fault site: {0}")]
    UnresolvedSite(String),
}

/// A labeled input sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: SpikeRecord,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignOptions {
    pub late_start: bool,
    pub early_stop: bool,
    /// Early-stop tolerance on the 1-norm of the golden/faulty difference.
    pub tol: f64,
    pub batch_size: usize,
    /// Evaluate the samples of a batch on the rayon pool.
    pub parallel: bool,
    /// Keep each round's output-layer records.
    pub save_outputs: bool,
    /// Largest accuracy drop still labeled benign.
    pub misprediction_tolerance: f64,
    pub seed: u64,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            late_start: true,
            early_stop: true,
            tol: 0.0,
            batch_size: 16,
            parallel: true,
            save_outputs: false,
            misprediction_tolerance: 0.0,
            seed: 0,
        }
    }
}

impl CampaignOptions {
    /// Full forward passes only, one sample at a time.
    pub fn naive() -> Self {
        Self { late_start: false, early_stop: false, batch_size: 1, parallel: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(CampaignError::InvalidOptions(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.misprediction_tolerance.is_finite() && self.misprediction_tolerance >= 0.0) {
            return Err(CampaignError::InvalidOptions(format!(
                "misprediction_tolerance must be >= 0, got {}",
                self.misprediction_tolerance
            )));
        }
        if self.batch_size == 0 {
            return Err(CampaignError::InvalidOptions("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fault removed during preparation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFault {
    /// Index of the round as injected.
    pub round: Option<usize>,
    pub model: String,
    pub sites: Vec<FaultSite>,
    pub reason: String,
}

/// A prepared fault round: validated, fully resolved, sorted by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRound {
    /// Index of the round as injected.
    pub index: usize,
    pub faults: Vec<Fault>,
    /// Declaration position of each entry of `faults`.
    pub declared: Vec<usize>,
    pub leftmost: usize,
    pub rightmost: usize,
    /// Every fault touching `leftmost` rewrites neuron outputs only.
    pub hard_neuron_only_leftmost: bool,
}

impl FaultRound {
    /// Sorts resolved faults and derives the leftmost/rightmost faulty layers.
    pub fn new(index: usize, faults: Vec<Fault>) -> Option<Self> {
        let mut order: Vec<(usize, Fault)> = faults.into_iter().enumerate().collect();
        order.sort_by_key(|(i, f)| (f.first_layer().unwrap_or(usize::MAX), *i));
        let leftmost = order.iter().filter_map(|(_, f)| f.first_layer()).min()?;
        let rightmost = order.iter().filter_map(|(_, f)| f.last_layer()).max()?;
        let hard_neuron_only_leftmost = order
            .iter()
            .filter(|(_, f)| f.sites.iter().any(|s| s.layer() == Some(leftmost)))
            .all(|(_, f)| f.model.is_hard_neuron());
        let (declared, faults) = order.into_iter().unzip();
        Some(Self { index, faults, declared, leftmost, rightmost, hard_neuron_only_leftmost })
    }

    /// Total number of fault sites in the round.
    pub fn num_sites(&self) -> usize {
        self.faults.iter().map(|f| f.sites.len()).sum()
    }

    pub(crate) fn in_declaration_order(&self) -> Vec<&Fault> {
        let mut order: Vec<(usize, &Fault)> = self.declared.iter().copied().zip(&self.faults).collect();
        order.sort_by_key(|(i, _)| *i);
        order.into_iter().map(|(_, f)| f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundLabel {
    Critical,
    Benign,
}

impl RoundLabel {
    /// Critical iff the accuracy drop exceeds `tolerance`.
    pub fn classify(golden_accuracy: f64, accuracy: f64, tolerance: f64) -> Self {
        if golden_accuracy - accuracy > tolerance {
            Self::Critical
        } else {
            Self::Benign
        }
    }
}

/// Hardware-independent work accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    pub layer_evaluations: u64,
    pub early_stops: u64,
    pub late_starts: u64,
}

impl std::ops::AddAssign for WorkCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.layer_evaluations += rhs.layer_evaluations;
        self.early_stops += rhs.early_stops;
        self.late_starts += rhs.late_starts;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub index: usize,
    pub faults: Vec<Fault>,
    pub leftmost: usize,
    pub rightmost: usize,
    pub accuracy: f64,
    pub label: RoundLabel,
    pub predictions: Vec<usize>,
    pub counters: WorkCounters,
    /// Output-layer records per sample, when saving was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<SpikeRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResults {
    pub format_version: u32,
    pub network: String,
    pub num_layers: usize,
    pub num_samples: usize,
    pub options: CampaignOptions,
    pub golden_accuracy: f64,
    pub golden_predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub golden_layer_evaluations: u64,
    pub rounds: Vec<RoundResult>,
    pub dropped: Vec<DroppedFault>,
    /// Bit-flip faults whose nominal weight was clamped into the quantizer range.
    pub clamped_weights: usize,
    pub totals: WorkCounters,
    pub runtime_ms: f64,
}

/// Prepared rounds plus everything dropped on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preparation {
    pub rounds: Vec<FaultRound>,
    pub dropped: Vec<DroppedFault>,
}

/// A fault-injection campaign over one network.
#[derive(Debug, Clone)]
pub struct Campaign {
    network: Arc<Network>,
    rounds: Vec<Vec<Fault>>,
    notes: Vec<DroppedFault>,
    pub options: CampaignOptions,
}

impl Campaign {
    pub fn new(network: Arc<Network>, options: CampaignOptions) -> Self {
        Self { network, rounds: Vec::new(), notes: Vec::new(), options }
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    /// Rounds as injected, before preparation.
    pub fn rounds(&self) -> &[Vec<Fault>] {
        &self.rounds
    }

    /// Adds `fault` to the current round, opening one if needed.
    pub fn inject(&mut self, fault: Fault) {
        match self.rounds.last_mut() {
            Some(round) => round.push(fault),
            None => self.rounds.push(vec![fault]),
        }
    }

    /// Opens a new round holding `faults`.
    pub fn then_inject(&mut self, faults: impl IntoIterator<Item = Fault>) {
        self.rounds.push(faults.into_iter().collect());
    }

    /// Adds one single-fault round per element of `layer` matching the model's target.
    ///
    /// Returns the number of rounds added.
    pub fn inject_complete(&mut self, model: FaultModel, layer: usize) -> usize {
        let kind = if model.target().is_neuron() { SiteKind::Neuron } else { SiteKind::Synapse };
        let count = candidate_count(&self.network, SiteScope::Layer(layer), kind).unwrap_or(0);
        if count == 0 {
            let reason = if layer >= self.network.len() {
                "no such layer".to_string()
            } else {
                format!("layer {layer} has no elements targeted by `{}`", model.name())
            };
            tracing::warn!(layer, %reason, "inject_complete added no rounds");
            self.notes.push(DroppedFault { round: None, model: model.name().to_string(), sites: Vec::new(), reason });
            return 0;
        }
        for i in 0..count {
            let site = element_site(&self.network, layer, kind, i);
            self.rounds.push(vec![Fault::at(model.clone(), site)]);
        }
        count
    }

    /// Removes every round; the network itself is never mutated.
    pub fn eject(&mut self) {
        self.rounds.clear();
        self.notes.clear();
    }

    /// Validates faults, assigns random sites, and sorts each round by layer.
    pub fn prepare(&self) -> Preparation {
        let net = &*self.network;
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        let mut dropped = self.notes.clone();
        let mut rounds = Vec::new();
        for (index, raw) in self.rounds.iter().enumerate() {
            let mut kept = Vec::with_capacity(raw.len());
            for fault in raw {
                let drop = |reason: String| DroppedFault {
                    round: Some(index),
                    model: fault.model.name().to_string(),
                    sites: fault.sites.clone(),
                    reason,
                };
                if let SiteCheck::Dropped(reason) = validate_site(net, fault) {
                    tracing::warn!(round = index, %reason, "dropping fault");
                    dropped.push(drop(reason));
                    continue;
                }
                let resolved = match resolve_random(net, fault, &mut rng) {
                    Ok(f) => f,
                    Err(e) => {
                        dropped.push(drop(e.to_string()));
                        continue;
                    }
                };
                if let SiteCheck::Dropped(reason) = validate_site(net, &resolved) {
                    dropped.push(drop(reason));
                    continue;
                }
                kept.push(resolved);
            }
            match FaultRound::new(index, kept) {
                Some(round) => rounds.push(round),
                None if !raw.is_empty() => tracing::warn!(round = index, "round has no valid faults left"),
                None => {}
            }
        }
        Preparation { rounds, dropped }
    }

    /// Prepares and executes the campaign over `dataset`.
    pub fn run(&self, dataset: &[Sample]) -> Result<CampaignResults, CampaignError> {
        let preparation = self.prepare();
        engine::run_prepared(&self.network, preparation, &self.options, dataset)
    }
}

fn resolve_random(net: &Network, fault: &Fault, rng: &mut ChaCha8Rng) -> Result<Fault, FaultError> {
    if fault.is_resolved() {
        return Ok(fault.clone());
    }
    let kind = if fault.model.target().is_neuron() { SiteKind::Neuron } else { SiteKind::Synapse };
    let mut scopes: Vec<(SiteScope, usize)> = Vec::new();
    for site in &fault.sites {
        if let FaultSite::Random { scope } = site {
            match scopes.iter_mut().find(|(s, _)| s == scope) {
                Some((_, n)) => *n += 1,
                None => scopes.push((*scope, 1)),
            }
        }
    }
    let mut sites: Vec<FaultSite> = fault.sites.iter().filter(|s| !matches!(s, FaultSite::Random { .. })).copied().collect();
    for (scope, count) in scopes {
        sites.extend(sample_sites(net, scope, kind, count, rng)?);
    }
    Ok(Fault { model: fault.model.clone(), sites, duration: fault.duration })
}
