//! Flat CSV table consumed by the plotting scripts: one row per fault site.

use std::path::Path;

use serde::Serialize;

use super::FormatError;
use crate::campaign::{CampaignResults, RoundLabel};
use crate::fault::{FaultDuration, FaultSite, SiteScope};

#[derive(Debug, Serialize)]
struct PlotRow<'a> {
    round: usize,
    model: &'a str,
    parameter: Option<f64>,
    duration: String,
    num_sites: usize,
    layer: Option<usize>,
    site_kind: &'static str,
    channel: Option<usize>,
    y: Option<usize>,
    x: Option<usize>,
    pre: Option<String>,
    post: Option<String>,
    out_ch: Option<usize>,
    in_ch: Option<usize>,
    ky: Option<usize>,
    kx: Option<usize>,
    accuracy: f64,
    golden_accuracy: f64,
    label: &'static str,
    layer_evaluations: u64,
    early_stops: u64,
    late_starts: u64,
}

pub fn write_plot_table<W: std::io::Write>(results: &CampaignResults, out: W) -> Result<(), FormatError> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| FormatError::parse("plot table", e);
    for round in &results.rounds {
        let num_sites = round.faults.iter().map(|f| f.sites.len()).sum();
        for fault in &round.faults {
            let duration = match fault.duration {
                FaultDuration::Permanent => "permanent".to_string(),
                FaultDuration::Transient { t1, t2 } => format!("{t1}-{t2}"),
            };
            for site in &fault.sites {
                let mut row = PlotRow {
                    round: round.index,
                    model: fault.model.name(),
                    parameter: fault.model.parameter(),
                    duration: duration.clone(),
                    num_sites,
                    layer: site.layer(),
                    site_kind: "",
                    channel: None,
                    y: None,
                    x: None,
                    pre: None,
                    post: None,
                    out_ch: None,
                    in_ch: None,
                    ky: None,
                    kx: None,
                    accuracy: round.accuracy,
                    golden_accuracy: results.golden_accuracy,
                    label: match round.label {
                        RoundLabel::Critical => "critical",
                        RoundLabel::Benign => "benign",
                    },
                    layer_evaluations: round.counters.layer_evaluations,
                    early_stops: round.counters.early_stops,
                    late_starts: round.counters.late_starts,
                };
                match *site {
                    FaultSite::Neuron { channel, y, x, .. } => {
                        row.site_kind = "neuron";
                        (row.channel, row.y, row.x) = (Some(channel), Some(y), Some(x));
                    }
                    FaultSite::Synapse { post, pre, .. } => {
                        row.site_kind = "synapse";
                        row.post = Some(format!("{}:{}:{}", post.channel, post.y, post.x));
                        row.pre = Some(format!("{}:{}:{}", pre.channel, pre.y, pre.x));
                    }
                    FaultSite::Kernel { out_ch, in_ch, ky, kx, .. } => {
                        row.site_kind = "kernel";
                        (row.out_ch, row.in_ch, row.ky, row.kx) = (Some(out_ch), Some(in_ch), Some(ky), Some(kx));
                    }
                    FaultSite::Random { scope } => {
                        row.site_kind = match scope {
                            SiteScope::Layer(_) => "random_layer",
                            SiteScope::Network => "random_network",
                        };
                    }
                }
                writer.serialize(row).map_err(csv_err)?;
            }
        }
    }
    writer.flush().map_err(|e| FormatError::parse("plot table", e))
}

pub fn export_plot_table(results: &CampaignResults, path: &Path) -> Result<(), FormatError> {
    let file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_plot_table(results, std::io::BufWriter::new(file))
}
