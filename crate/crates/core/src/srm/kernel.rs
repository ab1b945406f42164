use super::{Clock, NeuronParams, SrmError};

/// Relative magnitude below which a sampled kernel tail is dropped.
///
/// Kernels are also never longer than the clock window, since lags beyond
/// `num_steps - 1` ticks cannot reach any timestamp.
pub const KERNEL_CUTOFF: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Response of the membrane to an incoming spike.
    Synaptic,
    /// Negative self-response after the neuron's own spike.
    Refractory,
}

/// Evaluates a kernel at `lag_ms` milliseconds.
///
/// Synaptic: `(s / tau_s) * exp(1 - s / tau_s)`.
/// Refractory: `-2 theta (s / tau_ref) * exp(1 - s / tau_ref)`.
/// Both are zero for non-positive lags.
pub fn eval_kernel(kind: KernelKind, lag_ms: f64, params: &NeuronParams) -> Result<f64, SrmError> {
    if !lag_ms.is_finite() {
        return Err(SrmError::NonFiniteLag(lag_ms));
    }
    if lag_ms <= 0.0 {
        return Ok(0.0);
    }
    let value = match kind {
        KernelKind::Synaptic => alpha(lag_ms / params.tau_s),
        KernelKind::Refractory => -2.0 * params.theta * alpha(lag_ms / params.tau_ref),
    };
    Ok(value)
}

fn alpha(x: f64) -> f64 {
    x * (1.0 - x).exp()
}

/// A kernel sampled at lags `T, 2T, ...` on the clock grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    values: Vec<f64>,
}

impl SampledKernel {
    pub fn sample(kind: KernelKind, params: &NeuronParams, clock: &Clock) -> Result<Self, SrmError> {
        let max_lag = clock.num_steps.saturating_sub(1);
        let mut values = Vec::with_capacity(max_lag);
        let mut peak = 0.0f64;
        let mut past_peak = false;
        for k in 1..=max_lag {
            let v = eval_kernel(kind, clock.timestamp_ms(k), params)?;
            if !v.is_finite() {
                return Err(SrmError::Overflow(format!("{kind:?} kernel")));
            }
            let magnitude = v.abs();
            if magnitude >= peak {
                peak = magnitude;
            } else {
                past_peak = true;
            }
            if past_peak && magnitude < KERNEL_CUTOFF * peak {
                break;
            }
            values.push(v);
        }
        Ok(Self { values })
    }

    /// Kernel value at a lag of `k + 1` ticks.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
