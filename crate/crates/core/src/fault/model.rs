use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FaultDuration, FaultError, Quantizer};
use crate::srm::NeuronParams;

/// SRM parameter addressed by a parametric neuron fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronParam {
    TauS,
    TauRef,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTarget {
    NeuronOutput,
    NeuronParam(NeuronParam),
    SynapseWeight,
}

impl FaultTarget {
    pub fn is_neuron(&self) -> bool {
        !matches!(self, Self::SynapseWeight)
    }

    fn describe(&self) -> &'static str {
        match self {
            Self::NeuronOutput => "a neuron output",
            Self::NeuronParam(_) => "neuron parameters",
            Self::SynapseWeight => "a synapse weight",
        }
    }
}

/// Built-in behavioral fault models, plus user-defined ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultModel {
    /// Output forced to zero.
    DeadNeuron,
    /// One spike at every timestamp.
    SaturatedNeuron,
    /// Output forced to `x` at every timestamp.
    StuckAt { x: f64 },
    /// Membrane time constant scaled by `rho`.
    Integration { rho: f64 },
    /// Refractory time constant scaled by `rho`.
    Refractory { rho: f64 },
    /// Threshold scaled by `rho`.
    Threshold { rho: f64 },
    DeadSynapse,
    /// Weight replaced by an extreme value.
    SaturatedSynapse {
        #[serde(default = "default_saturation")]
        value: f64,
    },
    PerturbedSynapse { rho: f64 },
    /// Flips `bits` of the `width`-bit quantized weight.
    BitflipSynapse {
        bits: Vec<u32>,
        #[serde(default = "default_width")]
        width: u32,
    },
    #[serde(skip)]
    Custom(CustomFault),
}

fn default_saturation() -> f64 {
    10.0
}

fn default_width() -> u32 {
    8
}

impl FaultModel {
    pub fn target(&self) -> FaultTarget {
        match self {
            Self::DeadNeuron | Self::SaturatedNeuron | Self::StuckAt { .. } => FaultTarget::NeuronOutput,
            Self::Integration { .. } => FaultTarget::NeuronParam(NeuronParam::TauS),
            Self::Refractory { .. } => FaultTarget::NeuronParam(NeuronParam::TauRef),
            Self::Threshold { .. } => FaultTarget::NeuronParam(NeuronParam::Theta),
            Self::DeadSynapse
            | Self::SaturatedSynapse { .. }
            | Self::PerturbedSynapse { .. }
            | Self::BitflipSynapse { .. } => FaultTarget::SynapseWeight,
            Self::Custom(c) => c.target(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::DeadNeuron => "dead_neuron",
            Self::SaturatedNeuron => "saturated_neuron",
            Self::StuckAt { .. } => "stuck_at",
            Self::Integration { .. } => "integration",
            Self::Refractory { .. } => "refractory",
            Self::Threshold { .. } => "threshold",
            Self::DeadSynapse => "dead_synapse",
            Self::SaturatedSynapse { .. } => "saturated_synapse",
            Self::PerturbedSynapse { .. } => "perturbed_synapse",
            Self::BitflipSynapse { .. } => "bitflip_synapse",
            Self::Custom(c) => &c.name,
        }
    }

    /// Scalar parameter of the model, if any (x, rho, value, or the highest flipped bit).
    pub fn parameter(&self) -> Option<f64> {
        match self {
            Self::StuckAt { x } => Some(*x),
            Self::Integration { rho } | Self::Refractory { rho } | Self::Threshold { rho } => Some(*rho),
            Self::PerturbedSynapse { rho } => Some(*rho),
            Self::SaturatedSynapse { value } => Some(*value),
            Self::BitflipSynapse { bits, .. } => bits.iter().max().map(|b| f64::from(*b)),
            _ => None,
        }
    }

    /// Hard neuron faults rewrite outputs without re-evaluating the layer.
    pub fn is_hard_neuron(&self) -> bool {
        self.target() == FaultTarget::NeuronOutput
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        let bad = |msg: String| Err(FaultError::InvalidModel(msg));
        match self {
            Self::StuckAt { x } if !x.is_finite() => bad(format!("stuck-at value must be finite, got {x}")),
            Self::Integration { rho } | Self::Refractory { rho } | Self::Threshold { rho } => {
                if !rho.is_finite() {
                    bad(format!("rho must be finite, got {rho}"))
                } else if *rho <= 0.0 {
                    Err(FaultError::DegenerateParam(*rho))
                } else {
                    Ok(())
                }
            }
            Self::PerturbedSynapse { rho } if !rho.is_finite() => bad(format!("rho must be finite, got {rho}")),
            Self::SaturatedSynapse { value } if !value.is_finite() => {
                bad(format!("saturation value must be finite, got {value}"))
            }
            Self::BitflipSynapse { bits, width } => {
                if !(1..=32).contains(width) {
                    bad(format!("word width must be 1..=32, got {width}"))
                } else if bits.is_empty() {
                    bad("bit-flip needs at least one bit position".into())
                } else if let Some(b) = bits.iter().find(|b| **b >= *width) {
                    bad(format!("bit position {b} out of range for {width}-bit words"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn bit_mask(&self) -> Option<u32> {
        match self {
            Self::BitflipSynapse { bits, .. } => Some(bits.iter().fold(0u32, |m, b| m | (1u32 << b))),
            _ => None,
        }
    }
}

/// Behavior of a user-defined fault model.
#[derive(Clone)]
pub enum CustomFunction {
    /// Maps the nominal output value at an active timestamp.
    NeuronOutput(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    NeuronParams(NeuronParam, Arc<dyn Fn(NeuronParams) -> NeuronParams + Send + Sync>),
    Weight(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A named (target, function) pair registered by the user.
#[derive(Clone)]
pub struct CustomFault {
    pub name: String,
    pub function: CustomFunction,
}

impl CustomFault {
    pub fn target(&self) -> FaultTarget {
        match &self.function {
            CustomFunction::NeuronOutput(_) => FaultTarget::NeuronOutput,
            CustomFunction::NeuronParams(p, _) => FaultTarget::NeuronParam(*p),
            CustomFunction::Weight(_) => FaultTarget::SynapseWeight,
        }
    }
}

impl fmt::Debug for CustomFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFault").field("name", &self.name).field("target", &self.target()).finish()
    }
}

impl PartialEq for CustomFault {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.target() == other.target()
    }
}

fn mismatch(model: &FaultModel, target: FaultTarget) -> FaultError {
    FaultError::TargetMismatch { model: model.name().to_string(), target: target.describe() }
}

/// Applies a neuron-output fault to one spike row (column `j` is timestamp `j + 1`).
///
/// Inactive timestamps keep their nominal values.
pub fn faulty_neuron_output(model: &FaultModel, row: &mut [f64], duration: FaultDuration) -> Result<(), FaultError> {
    let cols = duration.columns(row.len());
    match model {
        FaultModel::DeadNeuron => row[cols].iter_mut().for_each(|v| *v = 0.0),
        FaultModel::SaturatedNeuron => row[cols].iter_mut().for_each(|v| *v = 1.0),
        FaultModel::StuckAt { x } => row[cols].iter_mut().for_each(|v| *v = *x),
        FaultModel::Custom(CustomFault { function: CustomFunction::NeuronOutput(f), .. }) => {
            row[cols].iter_mut().for_each(|v| *v = f(*v))
        }
        other => return Err(mismatch(other, FaultTarget::NeuronOutput)),
    }
    Ok(())
}

/// Neuron parameters under a parametric fault.
pub fn faulty_params(model: &FaultModel, params: &NeuronParams) -> Result<NeuronParams, FaultError> {
    let mut out = *params;
    match model {
        FaultModel::Integration { rho } | FaultModel::Refractory { rho } | FaultModel::Threshold { rho } => {
            if !(rho.is_finite() && *rho > 0.0) {
                return Err(FaultError::DegenerateParam(*rho));
            }
            match model.target() {
                FaultTarget::NeuronParam(NeuronParam::TauS) => out.tau_s *= rho,
                FaultTarget::NeuronParam(NeuronParam::TauRef) => out.tau_ref *= rho,
                _ => out.theta *= rho,
            }
        }
        FaultModel::Custom(CustomFault { function: CustomFunction::NeuronParams(_, f), .. }) => out = f(out),
        other => return Err(mismatch(other, FaultTarget::NeuronParam(NeuronParam::Theta))),
    }
    out.validate().map_err(|e| FaultError::InvalidModel(e.to_string()))?;
    Ok(out)
}

/// Result of a weight fault: the faulty value and whether quantization clamped it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOutcome {
    pub value: f64,
    pub clamped: bool,
}

/// Weight seen at the 1-based timestamp `t` under a synapse fault.
pub fn faulty_weight(
    model: &FaultModel,
    w: f64,
    quantizer: Option<&Quantizer>,
    t: usize,
    duration: FaultDuration,
) -> Result<WeightOutcome, FaultError> {
    if model.target() != FaultTarget::SynapseWeight {
        return Err(mismatch(model, FaultTarget::SynapseWeight));
    }
    if !duration.is_active(t) {
        return Ok(WeightOutcome { value: w, clamped: false });
    }
    apply_weight_fault(model, w, quantizer)
}

pub(crate) fn apply_weight_fault(
    model: &FaultModel,
    w: f64,
    quantizer: Option<&Quantizer>,
) -> Result<WeightOutcome, FaultError> {
    let value = match model {
        FaultModel::DeadSynapse => 0.0,
        FaultModel::SaturatedSynapse { value } => *value,
        FaultModel::PerturbedSynapse { rho } => rho * w,
        FaultModel::BitflipSynapse { width, .. } => {
            let q = quantizer.ok_or(FaultError::MissingQuantizer)?;
            if q.width != *width {
                return Err(FaultError::InvalidQuantizer(format!(
                    "quantizer is {} bits but the fault expects {width}",
                    q.width
                )));
            }
            let mask = model.bit_mask().unwrap_or(0);
            return Ok(WeightOutcome { value: q.flip(w, mask), clamped: !q.contains(w) });
        }
        FaultModel::Custom(CustomFault { function: CustomFunction::Weight(f), .. }) => f(w),
        other => return Err(mismatch(other, FaultTarget::SynapseWeight)),
    };
    Ok(WeightOutcome { value, clamped: false })
}
