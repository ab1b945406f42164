//! Fault models, sites, durations, and the weight quantizer.

mod model;
mod quantizer;
mod site;

pub use model::{
    faulty_neuron_output, faulty_params, faulty_weight, CustomFault, CustomFunction, FaultModel, FaultTarget,
    NeuronParam, WeightOutcome,
};
pub use quantizer::Quantizer;
pub(crate) use model::apply_weight_fault;
pub(crate) use site::{candidate_count, element_site, layer_quantizer, sample_sites};
pub use site::{assign_random_sites, validate_site, Coord, FaultSite, SiteCheck, SiteKind, SiteScope};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaultError {
    #[error("fault model `{model}` cannot be applied to {target}")]
    TargetMismatch { model: String, target: &'static str },
    #[error("scale factor rho = {0} would make the neuron parameter non-positive")]
    DegenerateParam(f64),
    #[error("invalid fault model: {0}")]
    InvalidModel(String),
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),
    #[error("bit-flip fault requires a quantizer")]
    MissingQuantizer,
    #[error("invalid duration window [{t1}, {t2}] for {steps} timestamps")]
    InvalidDuration { t1: usize, t2: usize, steps: usize },
    #[error("requested {requested} random sites but only {available} candidates exist")]
    NotEnoughCandidates { requested: usize, available: usize },
    #[error("no such layer {0}")]
    NoSuchLayer(usize),
}

/// When a fault is active, in 1-based timestamp indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultDuration {
    #[default]
    Permanent,
    Transient { t1: usize, t2: usize },
}

impl FaultDuration {
    pub fn transient(t1: usize, t2: usize) -> Self {
        Self::Transient { t1, t2 }
    }

    /// Whether the fault is active at the 1-based timestamp `t`.
    pub fn is_active(&self, t: usize) -> bool {
        match *self {
            Self::Permanent => true,
            Self::Transient { t1, t2 } => t1 <= t && t <= t2,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<(), FaultError> {
        match *self {
            Self::Permanent => Ok(()),
            Self::Transient { t1, t2 } if 1 <= t1 && t1 <= t2 && t2 <= steps => Ok(()),
            Self::Transient { t1, t2 } => Err(FaultError::InvalidDuration { t1, t2, steps }),
        }
    }

    /// Active 0-based column range, clipped to `steps`.
    pub(crate) fn columns(&self, steps: usize) -> std::ops::Range<usize> {
        match *self {
            Self::Permanent => 0..steps,
            Self::Transient { t1, t2 } => (t1.max(1) - 1).min(steps)..t2.min(steps),
        }
    }
}

/// A fault model applied at one or more sites for a duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub model: FaultModel,
    pub sites: Vec<FaultSite>,
    #[serde(default)]
    pub duration: FaultDuration,
}

impl Fault {
    pub fn new(model: FaultModel, sites: Vec<FaultSite>) -> Self {
        Self { model, sites, duration: FaultDuration::Permanent }
    }

    pub fn at(model: FaultModel, site: FaultSite) -> Self {
        Self::new(model, vec![site])
    }

    /// A fault whose `count` sites are drawn at preparation time.
    pub fn random(model: FaultModel, scope: SiteScope, count: usize) -> Self {
        Self::new(model, vec![FaultSite::Random { scope }; count])
    }

    pub fn with_duration(mut self, duration: FaultDuration) -> Self {
        self.duration = duration;
        self
    }

    pub fn is_resolved(&self) -> bool {
        self.sites.iter().all(|s| !matches!(s, FaultSite::Random { .. }))
    }

    /// Lowest layer index touched by a resolved fault.
    pub fn first_layer(&self) -> Option<usize> {
        self.sites.iter().filter_map(FaultSite::layer).min()
    }

    pub fn last_layer(&self) -> Option<usize> {
        self.sites.iter().filter_map(FaultSite::layer).max()
    }
}
