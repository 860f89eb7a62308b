//! Portable float map codec.
//!
//! Writes little-endian files (`-1.0` scale) with rows stored bottom to top,
//! as the format prescribes. Reads either endianness.

use std::io::Write;

use crate::error::{Error, Result};

/// Decoded PFM payload, rows ordered top to bottom.
pub(crate) struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub(crate) fn is_pfm(bytes: &[u8]) -> bool {
    bytes.len() >= 3 && bytes[0] == b'P' && (bytes[1] == b'F' || bytes[1] == b'f')
}

pub(crate) fn encode(width: usize, height: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    debug_assert_eq!(data.len(), width * height * channels);
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = Vec::with_capacity(32 + data.len() * 4);
    write!(out, "{tag}\n{width} {height}\n-1.0\n").expect("write to vec");
    let row_len = width * channels;
    for row in (0..height).rev() {
        for v in &data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) fn decode(bytes: &[u8]) -> std::result::Result<PfmData, String> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ascii header")?);
    }
    // exactly one whitespace byte separates the scale from the payload
    pos += 1;

    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format!("bad magic {other:?}")),
    };
    let width: usize = tokens[1].parse().map_err(|_| "bad width")?;
    let height: usize = tokens[2].parse().map_err(|_| "bad height")?;
    let scale: f32 = tokens[3].parse().map_err(|_| "bad scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err("bad scale".into());
    }
    let little = scale < 0.0;

    let count = width * height * channels;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < count * 4 {
        return Err(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            count * 4
        ));
    }

    let row_len = width * channels;
    let mut data = vec![0f32; count];
    for (i, chunk) in payload[..count * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = i / row_len;
        let row = height - 1 - file_row;
        data[row * row_len + i % row_len] = v;
    }
    Ok(PfmData {
        width,
        height,
        channels,
        data,
    })
}

pub(crate) fn write_file(
    path: &std::path::Path,
    width: usize,
    height: usize,
    channels: usize,
    data: &[f32],
) -> Result<()> {
    std::fs::write(path, encode(width, height, channels, data)).map_err(|e| Error::io(path, e))
}
