//! Spike Response Model evaluation on a fixed clock grid.
//!
//! Column `j` of every [`SpikeRecord`] holds timestamp `t_{j+1} = (j + 1) * T`.
//! A spike at column `j` starts influencing membranes at column `j + 1`,
//! since both kernels vanish at zero lag.

mod kernel;
mod layer;
mod network;
mod record;

pub use kernel::{eval_kernel, KernelKind, SampledKernel, KERNEL_CUTOFF};
pub use layer::{simulate_layer_neurons, sumpool_forward, LayerKind, LayerSpec, MembraneTrace};
pub use network::{forward_layer, network_forward, Network};
pub use record::{Shape, SpikeRecord};

pub(crate) use layer::{evaluate_neurons, WeightSegment};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SrmError {
    #[error("kernel lag must be finite, got {0}")]
    NonFiniteLag(f64),
    #[error("invalid neuron parameters: {0}")]
    InvalidParams(String),
    #[error("invalid clock: {0}")]
    InvalidClock(String),
    #[error("invalid layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("numeric overflow while evaluating layer `{0}`")]
    Overflow(String),
    #[error("late start at layer {0} requires a seed record")]
    MissingSeed(usize),
    #[error("layer index {index} out of range for a {len}-layer network")]
    LayerOutOfRange { index: usize, len: usize },
}

/// Global simulation clock: `num_steps` ticks of `period_ms` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clock {
    pub period_ms: f64,
    pub num_steps: usize,
}

impl Clock {
    pub fn new(period_ms: f64, num_steps: usize) -> Result<Self, SrmError> {
        let clock = Self { period_ms, num_steps };
        clock.validate()?;
        Ok(clock)
    }

    pub fn validate(&self) -> Result<(), SrmError> {
        if !(self.period_ms.is_finite() && self.period_ms > 0.0) {
            return Err(SrmError::InvalidClock(format!(
                "period must be finite and positive, got {}",
                self.period_ms
            )));
        }
        if self.num_steps == 0 {
            return Err(SrmError::InvalidClock("num_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Time in milliseconds of the 1-based timestamp `j`.
    pub fn timestamp_ms(&self, j: usize) -> f64 {
        j as f64 * self.period_ms
    }
}

/// SRM parameters shared by all neurons of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub tau_s: f64,
    pub tau_ref: f64,
    pub theta: f64,
    #[serde(default)]
    pub u_rest: f64,
}

impl NeuronParams {
    pub fn new(tau_s: f64, tau_ref: f64, theta: f64, u_rest: f64) -> Result<Self, SrmError> {
        let params = Self { tau_s, tau_ref, theta, u_rest };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SrmError> {
        for (name, value) in [("tau_s", self.tau_s), ("tau_ref", self.tau_ref), ("theta", self.theta)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SrmError::InvalidParams(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !self.u_rest.is_finite() {
            return Err(SrmError::InvalidParams(format!("u_rest must be finite, got {}", self.u_rest)));
        }
        Ok(())
    }

    /// Exact bit pattern, used to group neurons sharing a parameter set.
    pub(crate) fn bits(&self) -> [u64; 4] {
        [self.tau_s.to_bits(), self.tau_ref.to_bits(), self.theta.to_bits(), self.u_rest.to_bits()]
    }
}
