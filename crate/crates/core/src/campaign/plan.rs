//! Per-round injection plans: which weights, parameters, and outputs of each
//! layer a fault round overrides, precomputed once per round.

use std::collections::BTreeMap;

use super::{CampaignError, FaultRound};
use crate::fault::{
    apply_weight_fault, faulty_neuron_output, faulty_params, layer_quantizer, FaultDuration, FaultModel, FaultTarget,
    Quantizer,
};
use crate::srm::{evaluate_neurons, forward_layer, Network, NeuronParams, SpikeRecord, WeightSegment};

#[derive(Debug, Clone, Default)]
pub(crate) struct RoundPlan {
    layers: BTreeMap<usize, LayerPlan>,
    /// Weight faults whose nominal weight lay outside the quantizer range.
    pub clamped_weights: usize,
}

#[derive(Debug, Clone, Default)]
struct LayerPlan {
    /// Weight schedule tiling the clock window; `None` keeps nominal weights.
    segments: Option<Vec<WeightSegment>>,
    param_groups: Vec<ParamGroup>,
    outputs: Vec<(usize, FaultModel, FaultDuration)>,
}

/// Neurons re-simulated under one perturbed parameter set.
#[derive(Debug, Clone)]
struct ParamGroup {
    params: NeuronParams,
    rows: Vec<usize>,
    /// `(slot in rows, column range)` spliced into the layer record.
    splices: Vec<(usize, std::ops::Range<usize>)>,
}

struct PendingWeight {
    index: usize,
    model: FaultModel,
    duration: FaultDuration,
    quantizer: Option<Quantizer>,
}

impl RoundPlan {
    pub fn build(net: &Network, round: &FaultRound) -> Result<Self, CampaignError> {
        let steps = net.clock.num_steps;
        let mut weights: BTreeMap<usize, Vec<PendingWeight>> = BTreeMap::new();
        let mut params: BTreeMap<usize, BTreeMap<usize, Vec<(FaultModel, FaultDuration)>>> = BTreeMap::new();
        let mut plan = RoundPlan::default();

        for fault in round.in_declaration_order() {
            for site in &fault.sites {
                let (layer, element) = site.resolve(net).map_err(CampaignError::UnresolvedSite)?;
                match fault.model.target() {
                    FaultTarget::NeuronOutput => {
                        plan.layers.entry(layer).or_default().outputs.push((element, fault.model.clone(), fault.duration))
                    }
                    FaultTarget::NeuronParam(_) => params
                        .entry(layer)
                        .or_default()
                        .entry(element)
                        .or_default()
                        .push((fault.model.clone(), fault.duration)),
                    FaultTarget::SynapseWeight => {
                        let quantizer = match &fault.model {
                            FaultModel::BitflipSynapse { width, .. } => Some(layer_quantizer(net, layer, *width)?),
                            _ => None,
                        };
                        weights.entry(layer).or_default().push(PendingWeight {
                            index: element,
                            model: fault.model.clone(),
                            duration: fault.duration,
                            quantizer,
                        });
                    }
                }
            }
        }

        for (layer, faults) in weights {
            let nominal = net.layers[layer].nominal_weights();
            let mut clamped = vec![false; faults.len()];
            let mut segments = Vec::new();
            for cols in split_columns(steps, faults.iter().map(|f| f.duration)) {
                let t = cols.start + 1;
                let mut w = nominal.clone();
                for (i, f) in faults.iter().enumerate() {
                    if f.duration.is_active(t) {
                        let out = apply_weight_fault(&f.model, w[f.index], f.quantizer.as_ref())?;
                        clamped[i] |= out.clamped;
                        w[f.index] = out.value;
                    }
                }
                segments.push(WeightSegment { start: cols.start, end: cols.end, weights: w });
            }
            plan.clamped_weights += clamped.iter().filter(|c| **c).count();
            plan.layers.entry(layer).or_default().segments = Some(segments);
        }

        for (layer, neurons) in params {
            let nominal = net.layers[layer].params.ok_or_else(|| {
                CampaignError::UnresolvedSite(format!("layer {layer} has no neuron parameters"))
            })?;
            let mut groups: Vec<ParamGroup> = Vec::new();
            for (neuron, faults) in neurons {
                for cols in split_columns(steps, faults.iter().map(|f| f.1)) {
                    let t = cols.start + 1;
                    let mut p = nominal;
                    for (model, duration) in &faults {
                        if duration.is_active(t) {
                            p = faulty_params(model, &p)?;
                        }
                    }
                    if p.bits() == nominal.bits() {
                        continue;
                    }
                    let group = match groups.iter_mut().position(|g| g.params.bits() == p.bits()) {
                        Some(i) => &mut groups[i],
                        None => {
                            groups.push(ParamGroup { params: p, rows: Vec::new(), splices: Vec::new() });
                            groups.last_mut().expect("just pushed")
                        }
                    };
                    let slot = match group.rows.iter().position(|r| *r == neuron) {
                        Some(s) => s,
                        None => {
                            group.rows.push(neuron);
                            group.rows.len() - 1
                        }
                    };
                    group.splices.push((slot, cols));
                }
            }
            plan.layers.entry(layer).or_default().param_groups = groups;
        }
        Ok(plan)
    }

    /// Evaluates `layer` on `input` with this round's faults applied.
    pub fn eval_layer(&self, net: &Network, layer: usize, input: &SpikeRecord) -> Result<SpikeRecord, CampaignError> {
        let spec = &net.layers[layer];
        let Some(lp) = self.layers.get(&layer) else {
            return Ok(forward_layer(spec, input, &net.clock)?);
        };
        let mut record = match (&spec.params, &lp.segments) {
            (Some(params), Some(segments)) => {
                let rows: Vec<usize> = (0..spec.output_shape.len()).collect();
                let out = evaluate_neurons(spec, params, segments, input, &net.clock, &rows, false)?;
                SpikeRecord::from_values(spec.output_shape, net.clock.num_steps, out.spikes)?
            }
            _ => forward_layer(spec, input, &net.clock)?,
        };
        if !lp.param_groups.is_empty() {
            let nominal_segments;
            let segments = match &lp.segments {
                Some(s) => s.as_slice(),
                None => {
                    nominal_segments =
                        [WeightSegment { start: 0, end: net.clock.num_steps, weights: spec.nominal_weights() }];
                    &nominal_segments[..]
                }
            };
            let steps = net.clock.num_steps;
            for group in &lp.param_groups {
                let dummy = evaluate_neurons(spec, &group.params, segments, input, &net.clock, &group.rows, false)?;
                for (slot, cols) in &group.splices {
                    let src = &dummy.spikes[slot * steps..(slot + 1) * steps];
                    record.row_mut(group.rows[*slot])[cols.clone()].copy_from_slice(&src[cols.clone()]);
                }
            }
        }
        self.apply_outputs(layer, &mut record)?;
        Ok(record)
    }

    /// Rewrites the outputs of hard-faulted neurons in `layer`, last declared wins.
    pub fn apply_outputs(&self, layer: usize, record: &mut SpikeRecord) -> Result<(), CampaignError> {
        if let Some(lp) = self.layers.get(&layer) {
            for (neuron, model, duration) in &lp.outputs {
                faulty_neuron_output(model, record.row_mut(*neuron), *duration)?;
            }
        }
        Ok(())
    }
}

/// Splits `0..steps` at every window boundary so activity is constant per piece.
fn split_columns(steps: usize, durations: impl Iterator<Item = FaultDuration>) -> Vec<std::ops::Range<usize>> {
    let mut cuts = vec![0, steps];
    for d in durations {
        let cols = d.columns(steps);
        cuts.push(cols.start);
        cuts.push(cols.end);
    }
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2).filter(|w| w[0] < w[1]).map(|w| w[0]..w[1]).collect()
}
