use crate::srm::{SpikeRecord, SrmError};

/// Rate-coded top-1 class: the output neuron with the most spikes.
///
/// Ties go to the lowest class index.
pub fn decode_rate(output: &SpikeRecord) -> usize {
    let mut best = 0;
    let mut best_count = f64::NEG_INFINITY;
    for (class, count) in output.spike_counts().into_iter().enumerate() {
        if count > best_count {
            best = class;
            best_count = count;
        }
    }
    best
}

/// Whether the faulty record is within `tol` of golden in elementwise 1-norm.
pub fn early_stop_check(golden: &SpikeRecord, faulty: &SpikeRecord, tol: f64) -> Result<bool, SrmError> {
    Ok(golden.l1_distance(faulty)? <= tol)
}
