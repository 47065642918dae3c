use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A frames x bands log-mel grid for one window, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelPatch {
    values: Vec<f32>,
    frames: usize,
    bands: usize,
    pub source_window_start_s: f64,
}

impl LogMelPatch {
    pub fn new(values: Vec<f32>, frames: usize, bands: usize, source_window_start_s: f64) -> Self {
        assert_eq!(values.len(), frames * bands, "patch buffer does not match its shape");
        Self {
            values,
            frames,
            bands,
            source_window_start_s,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, f: usize) -> &[f32] {
        &self.values[f * self.bands..(f + 1) * self.bands]
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Debug dump: `u32 frames, u32 bands` (LE) followed by the f32 LE grid.
pub fn write_patch(patch: &LogMelPatch, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 4 * patch.values.len());
    buf.extend_from_slice(&(patch.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(patch.bands as u32).to_le_bytes());
    for v in &patch.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| Error::io("write patch", e))
}

pub fn read_patch(mut input: impl Read) -> Result<LogMelPatch> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("read patch", e))?;
    if bytes.len() < 8 {
        return Err(Error::Shape("patch dump shorter than its header".into()));
    }
    let frames = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let bands = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * frames * bands {
        return Err(Error::Shape(format!(
            "patch dump holds {} bytes for a {frames}x{bands} grid",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(LogMelPatch::new(values, frames, bands, 0.0))
}
