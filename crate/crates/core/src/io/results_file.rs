//! Campaign results as JSON. Spike dumps inside are run-length encoded by
//! `SpikeRecord`'s serde form; floats round-trip exactly.

use std::path::Path;

use super::{check_version, read_text, FormatError};
use crate::campaign::CampaignResults;

pub fn results_to_string(results: &CampaignResults) -> Result<String, FormatError> {
    serde_json::to_string_pretty(results).map_err(|e| FormatError::parse("results", e))
}

pub fn results_from_str(text: &str) -> Result<CampaignResults, FormatError> {
    #[derive(serde::Deserialize)]
    struct Probe {
        format_version: u32,
    }
    let probe: Probe = serde_json::from_str(text).map_err(|e| FormatError::parse("results", e))?;
    check_version(probe.format_version)?;
    serde_json::from_str(text).map_err(|e| FormatError::parse("results", e))
}

pub fn export_results(results: &CampaignResults, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, results_to_string(results)?).map_err(|e| FormatError::io(path, e))
}

pub fn import_results(path: &Path) -> Result<CampaignResults, FormatError> {
    results_from_str(&read_text(path)?)
        .map_err(|e| match e {
            FormatError::Parse { message, .. } => FormatError::parse(path.display().to_string(), message),
            other => other,
        })
}
