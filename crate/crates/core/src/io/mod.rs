//! On-disk formats: network models, event streams, datasets, campaign
//! configurations, results, and flattened plot tables.
//!
//! Structured text is TOML (inputs) or JSON (results). Every format carries a
//! `format_version` field.

pub mod config;
pub mod dataset;
pub mod events;
pub mod network_file;
pub mod plots;
pub mod results_file;
pub mod rle;

pub use config::{load_campaign_config, parse_campaign, CampaignConfig, LoadedCampaign, ResolvedRound};
pub use dataset::{load_dataset, DatasetManifest};
pub use events::{encode_events, parse_binary_events, parse_text_events, Event};
pub use network_file::{load_network, parse_network, save_network};
pub use plots::export_plot_table;
pub use results_file::{export_results, import_results};

use std::path::{Path, PathBuf};

use crate::srm::SrmError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("invalid network header: {0}")]
    Header(String),
    #[error("weight blob: layer `{layer}`: {reason}")]
    Blob { layer: String, reason: String },
    #[error("event {index}: {reason}")]
    Event { index: usize, reason: String },
    #[error("dataset sample {index}: {reason}")]
    Dataset { index: usize, reason: String },
    #[error(transparent)]
    Srm(#[from] SrmError),
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Self::Parse { context: context.into(), message: message.to_string() }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn check_version(found: u32) -> Result<(), FormatError> {
    if found == FORMAT_VERSION {
        Ok(())
    } else {
        Err(FormatError::Version { found })
    }
}

/// Resolves `relative` against the directory containing `anchor`.
pub(crate) fn sibling(anchor: &Path, relative: &Path) -> PathBuf {
    if relative.is_absolute() {
        relative.to_path_buf()
    } else {
        anchor.parent().unwrap_or_else(|| Path::new(".")).join(relative)
    }
}
