//! Address-event streams from dynamic vision sensors.
//!
//! Text form: one `t_us x y p` event per line (`#` starts a comment).
//! Binary form: 5 bytes per event, big-endian bit fields
//! `x:8 | y:8 | polarity:1 | t_us:23`.

use super::FormatError;
use crate::srm::{Clock, Shape, SpikeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: u8,
}

pub fn parse_text_events(text: &str) -> Result<Vec<Event>, FormatError> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| FormatError::Event { index: lineno + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected `t_us x y p`, got {} fields", fields.len())));
        }
        let t_us = fields[0].parse::<u64>().map_err(|e| err(format!("timestamp: {e}")))?;
        let x = fields[1].parse::<u16>().map_err(|e| err(format!("x: {e}")))?;
        let y = fields[2].parse::<u16>().map_err(|e| err(format!("y: {e}")))?;
        let polarity = fields[3].parse::<u8>().map_err(|e| err(format!("polarity: {e}")))?;
        if polarity > 1 {
            return Err(err(format!("polarity must be 0 or 1, got {polarity}")));
        }
        events.push(Event { t_us, x, y, polarity });
    }
    Ok(events)
}

pub fn parse_binary_events(bytes: &[u8]) -> Result<Vec<Event>, FormatError> {
    if !bytes.len().is_multiple_of(5) {
        return Err(FormatError::Event {
            index: bytes.len() / 5,
            reason: format!("trailing {} bytes after the last 5-byte event", bytes.len() % 5),
        });
    }
    Ok(bytes
        .chunks_exact(5)
        .map(|b| Event {
            x: u16::from(b[0]),
            y: u16::from(b[1]),
            polarity: b[2] >> 7,
            t_us: (u64::from(b[2] & 0x7f) << 16) | (u64::from(b[3]) << 8) | u64::from(b[4]),
        })
        .collect())
}

pub fn write_binary_events(events: &[Event]) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(events.len() * 5);
    for (index, e) in events.iter().enumerate() {
        if e.x > 0xff || e.y > 0xff || e.polarity > 1 || e.t_us >= 1 << 23 {
            return Err(FormatError::Event { index, reason: "does not fit the 5-byte layout".into() });
        }
        out.extend_from_slice(&[
            e.x as u8,
            e.y as u8,
            (e.polarity << 7) | ((e.t_us >> 16) as u8 & 0x7f),
            (e.t_us >> 8) as u8,
            e.t_us as u8,
        ]);
    }
    Ok(out)
}

/// Bins events onto the clock grid as a `2 x height x width` record.
///
/// An event at `t` lands in timestamp `ceil(t / T)` clamped to `1..=d`; the
/// channel is the polarity. Coinciding events collapse to a single spike.
pub fn encode_events(events: &[Event], clock: &Clock, width: usize, height: usize) -> Result<SpikeRecord, FormatError> {
    clock.validate()?;
    let shape = Shape::new(2, height, width);
    let mut record = SpikeRecord::zeros(shape, clock.num_steps);
    let mut previous = 0u64;
    for (index, e) in events.iter().enumerate() {
        let err = |reason: String| FormatError::Event { index, reason };
        if e.t_us < previous {
            return Err(err(format!("timestamp {} precedes {previous}", e.t_us)));
        }
        previous = e.t_us;
        if usize::from(e.x) >= width || usize::from(e.y) >= height {
            return Err(err(format!("pixel ({}, {}) outside {width}x{height} sensor", e.x, e.y)));
        }
        if e.polarity > 1 {
            return Err(err(format!("polarity must be 0 or 1, got {}", e.polarity)));
        }
        let t_ms = e.t_us as f64 / 1000.0;
        let bin = ((t_ms / clock.period_ms).ceil() as usize).clamp(1, clock.num_steps);
        record.set(shape.index(usize::from(e.polarity), usize::from(e.y), usize::from(e.x)), bin - 1, 1.0);
    }
    Ok(record)
}
