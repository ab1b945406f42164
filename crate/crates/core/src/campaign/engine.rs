use std::time::Instant;

use rayon::prelude::*;

use super::plan::RoundPlan;
use super::{
    decode_rate, early_stop_check, CampaignError, CampaignOptions, CampaignResults, FaultRound, Preparation,
    RoundLabel, RoundResult, Sample, WorkCounters, RESULTS_FORMAT_VERSION,
};
use crate::srm::{network_forward, Network, SpikeRecord};

/// Golden (fault-free) per-layer records of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCache {
    /// `records[s][l]` is layer `l`'s output for sample `s`.
    pub records: Vec<Vec<SpikeRecord>>,
    pub predictions: Vec<usize>,
    pub correct: usize,
}

impl GoldenCache {
    pub fn accuracy(&self) -> f64 {
        if self.predictions.is_empty() {
            0.0
        } else {
            self.correct as f64 / self.predictions.len() as f64
        }
    }
}

fn check_sample(net: &Network, index: usize, sample: &Sample) -> Result<(), CampaignError> {
    if sample.input.shape() != net.input_shape() || sample.input.steps() != net.clock.num_steps {
        return Err(CampaignError::InvalidSample {
            index,
            reason: format!(
                "input is {} x {}, network expects {} x {}",
                sample.input.shape(),
                sample.input.steps(),
                net.input_shape(),
                net.clock.num_steps
            ),
        });
    }
    if sample.label >= net.num_classes {
        return Err(CampaignError::InvalidSample {
            index,
            reason: format!("label {} out of range for {} classes", sample.label, net.num_classes),
        });
    }
    Ok(())
}

fn map_samples<T, F>(samples: &[Sample], parallel: bool, f: F) -> Result<Vec<T>, CampaignError>
where
    T: Send,
    F: Fn(usize, &Sample) -> Result<T, CampaignError> + Sync,
{
    if parallel {
        samples.par_iter().enumerate().map(|(i, s)| f(i, s)).collect()
    } else {
        samples.iter().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}

/// Fault-free forward pass of every sample, caching all layer records.
pub fn golden_run(net: &Network, samples: &[Sample], parallel: bool) -> Result<GoldenCache, CampaignError> {
    let records = map_samples(samples, parallel, |i, s| {
        check_sample(net, i, s)?;
        Ok(network_forward(net, &s.input, 0, None, None)?)
    })?;
    let predictions: Vec<usize> = records.iter().map(|r| decode_rate(r.last().expect("non-empty network"))).collect();
    let correct = predictions.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    Ok(GoldenCache { records, predictions, correct })
}

/// Result of one round on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Faulty output-layer record (the golden one when stopped early).
    pub output: SpikeRecord,
    pub prediction: usize,
    pub counters: WorkCounters,
}

/// Runs `round` on one sample whose golden records are `golden`.
pub fn run_round(
    net: &Network,
    round: &FaultRound,
    sample: &SpikeRecord,
    golden: &[SpikeRecord],
    options: &CampaignOptions,
) -> Result<RoundOutcome, CampaignError> {
    let plan = RoundPlan::build(net, round)?;
    execute(net, round, &plan, sample, golden, options)
}

fn execute(
    net: &Network,
    round: &FaultRound,
    plan: &RoundPlan,
    input: &SpikeRecord,
    golden: &[SpikeRecord],
    options: &CampaignOptions,
) -> Result<RoundOutcome, CampaignError> {
    if golden.len() != net.len() {
        return Err(CampaignError::MissingCache { cached: golden.len(), expected: net.len() });
    }
    let last = net.len() - 1;
    let mut counters = WorkCounters::default();
    let stopped = |counters: WorkCounters| RoundOutcome {
        output: golden[last].clone(),
        prediction: decode_rate(&golden[last]),
        counters: WorkCounters { early_stops: 1, ..counters },
    };

    let (first, mut current) = if options.late_start && round.hard_neuron_only_leftmost {
        // Hard neuron faults only rewrite outputs: reuse the golden record of
        // the leftmost layer and resume right after it.
        counters.late_starts = 1;
        let mut record = golden[round.leftmost].clone();
        plan.apply_outputs(round.leftmost, &mut record)?;
        if options.early_stop
            && round.rightmost == round.leftmost
            && early_stop_check(&golden[round.leftmost], &record, options.tol)?
        {
            return Ok(stopped(counters));
        }
        (round.leftmost + 1, record)
    } else if options.late_start && round.leftmost > 0 {
        counters.late_starts = 1;
        (round.leftmost, golden[round.leftmost - 1].clone())
    } else {
        (0, input.clone())
    };

    for layer in first..=last {
        let record = plan.eval_layer(net, layer, &current)?;
        counters.layer_evaluations += 1;
        if options.early_stop && layer == round.rightmost && early_stop_check(&golden[round.rightmost], &record, options.tol)? {
            return Ok(stopped(counters));
        }
        current = record;
    }
    let prediction = decode_rate(&current);
    Ok(RoundOutcome { output: current, prediction, counters })
}

struct RoundAccumulator {
    predictions: Vec<usize>,
    correct: usize,
    counters: WorkCounters,
    outputs: Option<Vec<SpikeRecord>>,
}

pub(super) fn run_prepared(
    net: &Network,
    preparation: Preparation,
    options: &CampaignOptions,
    dataset: &[Sample],
) -> Result<CampaignResults, CampaignError> {
    options.validate()?;
    net.validate()?;
    if dataset.is_empty() {
        return Err(CampaignError::EmptyDataset);
    }
    if options.early_stop && options.tol > 0.0 {
        tracing::warn!(
            tol = options.tol,
            "early stop with a non-zero tolerance can mask critical faults and mislabel rounds as benign"
        );
    }
    let started = Instant::now();
    let Preparation { rounds, dropped } = preparation;
    let plans = rounds.iter().map(|r| RoundPlan::build(net, r)).collect::<Result<Vec<_>, _>>()?;
    let clamped_weights = plans.iter().map(|p| p.clamped_weights).sum();

    let mut acc: Vec<RoundAccumulator> = rounds
        .iter()
        .map(|_| RoundAccumulator {
            predictions: Vec::with_capacity(dataset.len()),
            correct: 0,
            counters: WorkCounters::default(),
            outputs: options.save_outputs.then(Vec::new),
        })
        .collect();
    let mut golden_predictions = Vec::with_capacity(dataset.len());
    let mut golden_correct = 0;
    let mut golden_layer_evaluations = 0u64;

    // Samples outside, rounds inside: each batch's golden cache serves every round.
    for (batch_no, batch) in dataset.chunks(options.batch_size).enumerate() {
        let offset = batch_no * options.batch_size;
        let golden = golden_run(net, batch, options.parallel).map_err(|e| match e {
            CampaignError::InvalidSample { index, reason } => CampaignError::InvalidSample { index: index + offset, reason },
            other => other,
        })?;
        golden_layer_evaluations += (batch.len() * net.len()) as u64;
        golden_predictions.extend_from_slice(&golden.predictions);
        golden_correct += golden.correct;

        for ((round, plan), acc) in rounds.iter().zip(&plans).zip(acc.iter_mut()) {
            let outcomes = map_samples(batch, options.parallel, |i, s| {
                execute(net, round, plan, &s.input, &golden.records[i], options)
            })?;
            for (outcome, sample) in outcomes.into_iter().zip(batch) {
                acc.correct += usize::from(outcome.prediction == sample.label);
                acc.predictions.push(outcome.prediction);
                acc.counters += outcome.counters;
                if let Some(outputs) = acc.outputs.as_mut() {
                    outputs.push(outcome.output);
                }
            }
        }
    }

    let n = dataset.len() as f64;
    let golden_accuracy = golden_correct as f64 / n;
    let mut totals = WorkCounters::default();
    let results = rounds
        .into_iter()
        .zip(acc)
        .map(|(round, acc)| {
            totals += acc.counters;
            let accuracy = acc.correct as f64 / n;
            RoundResult {
                index: round.index,
                leftmost: round.leftmost,
                rightmost: round.rightmost,
                faults: round.faults,
                accuracy,
                label: RoundLabel::classify(golden_accuracy, accuracy, options.misprediction_tolerance),
                predictions: acc.predictions,
                counters: acc.counters,
                outputs: acc.outputs,
            }
        })
        .collect();

    Ok(CampaignResults {
        format_version: RESULTS_FORMAT_VERSION,
        network: net.name.clone(),
        num_layers: net.len(),
        num_samples: dataset.len(),
        options: options.clone(),
        golden_accuracy,
        golden_predictions,
        labels: dataset.iter().map(|s| s.label).collect(),
        golden_layer_evaluations,
        rounds: results,
        dropped,
        clamped_weights,
        totals,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
