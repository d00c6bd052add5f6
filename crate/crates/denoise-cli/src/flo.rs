//! Middlebury `.flo` flow-field format.
//!
//! Layout: the little-endian `f32` sanity tag `202021.25`, then `i32`
//! width and height, then `width * height` interleaved `(u, v)` little-
//! endian `f32` pairs in row-major order. Components at or above `1e9`
//! mark unknown flow.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use denoise_core::flow::FlowField;

use crate::error::CliError;

const TAG: f32 = 202021.25;

pub fn read_flo(path: &Path) -> Result<FlowField, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() < 12 {
        return Err(CliError::format(path, "file too short for a .flo header"));
    }
    let tag = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if tag != TAG {
        return Err(CliError::format(
            path,
            format!("bad sanity tag {tag} (expected {TAG})"),
        ));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(CliError::format(path, format!("bad dimensions {width}x{height}")));
    }
    let (w, h) = (width as usize, height as usize);
    let expected = 12 + 8 * w * h;
    if bytes.len() < expected {
        return Err(CliError::format(
            path,
            format!("truncated: {} of {expected} bytes", bytes.len()),
        ));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for pair in bytes[12..expected].chunks_exact(8) {
        u.push(f32::from_le_bytes(pair[0..4].try_into().unwrap()) as f64);
        v.push(f32::from_le_bytes(pair[4..8].try_into().unwrap()) as f64);
    }
    Ok(FlowField::from_components(w, h, u, v))
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut bytes = Vec::with_capacity(12 + 8 * flow.u().len());
    bytes.extend_from_slice(&TAG.to_le_bytes());
    bytes.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    bytes.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        bytes.extend_from_slice(&(*u as f32).to_le_bytes());
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    file.write_all(&bytes).map_err(|e| CliError::io(path, e))
}
