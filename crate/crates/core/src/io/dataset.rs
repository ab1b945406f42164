//! Labeled datasets: a TOML manifest listing event files and class labels.
//!
//! ```toml
//! format_version = 1
//! [sensor]
//! width = 34
//! height = 34
//! [[samples]]
//! path = "sample0.txt"   # `.bin` selects the 5-byte binary layout
//! label = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::events::{encode_events, parse_binary_events, parse_text_events};
use super::{check_version, read_text, sibling, FormatError};
use crate::campaign::Sample;
use crate::srm::Clock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sensor: SensorSize,
    pub samples: Vec<DatasetEntry>,
}

pub fn load_dataset(manifest_path: &Path, clock: &Clock) -> Result<Vec<Sample>, FormatError> {
    let text = read_text(manifest_path)?;
    let manifest: DatasetManifest = toml::from_str(&text)
        .map_err(|e| FormatError::parse(manifest_path.display().to_string(), e))?;
    check_version(manifest.format_version)?;
    manifest
        .samples
        .iter()
        .enumerate()
        .map(|(index, entry)| {
            let path = sibling(manifest_path, &entry.path);
            let events = if path.extension().is_some_and(|e| e == "bin") {
                let bytes = std::fs::read(&path).map_err(|e| FormatError::io(&path, e))?;
                parse_binary_events(&bytes)
            } else {
                parse_text_events(&read_text(&path)?)
            }
            .map_err(|e| FormatError::Dataset { index, reason: format!("{}: {e}", path.display()) })?;
            let input = encode_events(&events, clock, manifest.sensor.width, manifest.sensor.height)
                .map_err(|e| FormatError::Dataset { index, reason: format!("{}: {e}", path.display()) })?;
            Ok(Sample { input, label: entry.label })
        })
        .collect()
}
