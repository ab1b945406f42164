//! Discrete-time Spike Response Model simulation with a fault-injection
//! campaign engine.
//!
//! The crate is split into four layers:
//!
//! * [`srm`]: kernels, spike records, and layer/network evaluation.
//! * [`fault`]: the built-in fault models, fault sites and durations, and the
//!   weight quantizer used by bit-flip faults.
//! * [`campaign`]: fault rounds, golden-run caching, late start / early stop,
//!   rate decoding and critical/benign labeling.
//! * [`io`]: on-disk formats (network models, event streams, campaign
//!   configs, results) and plot-table export.

pub mod campaign;
pub mod fault;
pub mod io;
pub mod srm;

pub use campaign::{
    Campaign, CampaignError, CampaignOptions, CampaignResults, FaultRound, RoundLabel,
    RoundResult, Sample,
};
pub use fault::{Fault, FaultDuration, FaultModel, FaultSite, Quantizer};
pub use srm::{Clock, LayerKind, LayerSpec, Network, NeuronParams, Shape, SpikeRecord};
