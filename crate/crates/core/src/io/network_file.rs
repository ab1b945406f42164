//! Network model files: a TOML header plus a little-endian f32 weight blob.
//!
//! Weights are stored layer-major; within a layer they follow the in-memory
//! layout (`out x in` for dense, `out_ch x in_ch x kh x kw` for conv). Each
//! layer declares its byte offset into the blob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, read_text, sibling, FormatError, FORMAT_VERSION};
use crate::srm::{Clock, LayerKind, LayerSpec, Network, NeuronParams, Shape};

/// Upper bound on any single dimension accepted from a header.
const MAX_DIM: usize = 1 << 16;
/// Upper bound on the element count of any shape or weight tensor.
const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Serialize, Deserialize)]
struct NetworkHeader {
    format_version: u32,
    #[serde(default)]
    name: String,
    weights_file: String,
    num_classes: usize,
    clock: Clock,
    layers: Vec<LayerHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    name: String,
    #[serde(flatten)]
    kind: LayerKind,
    input_shape: Shape,
    output_shape: Shape,
    #[serde(default)]
    weight_offset: u64,
    #[serde(default)]
    weight_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<NeuronParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quant_range: Option<(f64, f64)>,
}

/// Writes `<header>` and its `<stem>.weights` blob next to it.
pub fn save_network(net: &Network, header_path: &Path) -> Result<(), FormatError> {
    net.validate()?;
    let stem = header_path.file_stem().and_then(|s| s.to_str()).unwrap_or("network");
    let weights_file = format!("{stem}.weights");
    let mut blob = Vec::new();
    let layers = net
        .layers
        .iter()
        .map(|layer| {
            let offset = blob.len() as u64;
            for w in &layer.weights {
                blob.extend_from_slice(&w.to_le_bytes());
            }
            LayerHeader {
                name: layer.name.clone(),
                kind: layer.kind,
                input_shape: layer.input_shape,
                output_shape: layer.output_shape,
                weight_offset: offset,
                weight_count: layer.weights.len(),
                params: layer.params,
                quant_range: layer.quant_range,
            }
        })
        .collect();
    let header = NetworkHeader {
        format_version: FORMAT_VERSION,
        name: net.name.clone(),
        weights_file: weights_file.clone(),
        num_classes: net.num_classes,
        clock: net.clock,
        layers,
    };
    let text = toml::to_string(&header).map_err(|e| FormatError::parse("network header", e))?;
    std::fs::write(header_path, text).map_err(|e| FormatError::io(header_path, e))?;
    let blob_path = sibling(header_path, Path::new(&weights_file));
    std::fs::write(&blob_path, blob).map_err(|e| FormatError::io(&blob_path, e))
}

pub fn load_network(header_path: &Path) -> Result<Network, FormatError> {
    let text = read_text(header_path)?;
    let header = parse_header(&text)?;
    let blob_path = sibling(header_path, Path::new(&header.weights_file));
    let blob = std::fs::read(&blob_path).map_err(|e| FormatError::io(&blob_path, e))?;
    build(header, &blob)
}

/// Parses a header and weight blob held in memory.
pub fn parse_network(header_text: &str, blob: &[u8]) -> Result<Network, FormatError> {
    build(parse_header(header_text)?, blob)
}

fn parse_header(text: &str) -> Result<NetworkHeader, FormatError> {
    let header: NetworkHeader = toml::from_str(text).map_err(|e| FormatError::parse("network header", e))?;
    check_version(header.format_version)?;
    Ok(header)
}

fn check_shape(layer: &str, what: &str, s: Shape) -> Result<(), FormatError> {
    let dims = [s.channels, s.height, s.width];
    if dims.iter().any(|d| *d == 0 || *d > MAX_DIM)
        || dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d)).is_none_or(|n| n > MAX_ELEMENTS)
    {
        return Err(FormatError::Header(format!("layer `{layer}`: {what} {s} out of supported range")));
    }
    Ok(())
}

fn check_kind(layer: &str, kind: LayerKind) -> Result<(), FormatError> {
    let dims: &[usize] = match &kind {
        LayerKind::Dense => &[],
        LayerKind::Conv2d { kernel_h, kernel_w, stride, padding } => &[*kernel_h, *kernel_w, *stride, *padding],
        LayerKind::SumPool { pool_h, pool_w } => &[*pool_h, *pool_w],
    };
    if dims.iter().any(|d| *d > MAX_DIM) {
        return Err(FormatError::Header(format!("layer `{layer}`: hyper-parameters out of supported range")));
    }
    Ok(())
}

fn build(header: NetworkHeader, blob: &[u8]) -> Result<Network, FormatError> {
    header.clock.validate()?;
    if header.layers.is_empty() {
        return Err(FormatError::Header("network has no layers".into()));
    }
    // Shape arithmetic is checked before any weight is read.
    let mut shells = Vec::with_capacity(header.layers.len());
    for lh in &header.layers {
        check_shape(&lh.name, "input shape", lh.input_shape)?;
        check_shape(&lh.name, "output shape", lh.output_shape)?;
        check_kind(&lh.name, lh.kind)?;
        let shell = LayerSpec {
            name: lh.name.clone(),
            kind: lh.kind,
            input_shape: lh.input_shape,
            output_shape: lh.output_shape,
            weights: Vec::new(),
            params: lh.params,
            quant_range: lh.quant_range,
        };
        let derived = shell.derived_output_shape()?;
        if derived != lh.output_shape {
            return Err(FormatError::Header(format!(
                "layer `{}`: declared output {} but shape arithmetic gives {derived}",
                lh.name, lh.output_shape
            )));
        }
        let expected = shell.expected_weight_count();
        if expected > MAX_ELEMENTS || lh.weight_count != expected {
            return Err(FormatError::Header(format!(
                "layer `{}`: declares {} weights, shape requires {expected}",
                lh.name, lh.weight_count
            )));
        }
        shells.push(shell);
    }
    for pair in header.layers.windows(2) {
        if pair[0].output_shape != pair[1].input_shape {
            return Err(FormatError::Header(format!(
                "layer `{}` outputs {} but layer `{}` expects {}",
                pair[0].name, pair[0].output_shape, pair[1].name, pair[1].input_shape
            )));
        }
    }

    let mut declared_end = 0u64;
    for (shell, lh) in shells.iter_mut().zip(&header.layers) {
        let blob_err = |reason: String| FormatError::Blob { layer: lh.name.clone(), reason };
        let start = lh.weight_offset;
        let end = (lh.weight_count as u64)
            .checked_mul(4)
            .and_then(|n| start.checked_add(n))
            .ok_or_else(|| blob_err("offset overflow".into()))?;
        if end > blob.len() as u64 {
            return Err(blob_err(format!("needs bytes {start}..{end} but the blob holds {}", blob.len())));
        }
        declared_end = declared_end.max(end);
        shell.weights = blob[start as usize..end as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
    }
    if declared_end != blob.len() as u64 {
        return Err(FormatError::Blob {
            layer: header.layers.last().map(|l| l.name.clone()).unwrap_or_default(),
            reason: format!("blob holds {} bytes but the header declares {declared_end}", blob.len()),
        });
    }
    Ok(Network::new(header.name, shells, header.clock, header.num_classes)?)
}
