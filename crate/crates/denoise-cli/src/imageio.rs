//! Grayscale image reading and writing.
//!
//! Supported inputs: binary PGM (`P5`, 8- or 16-bit) and grayscale PNG
//! (8- or 16-bit). Samples map to floating point unchanged (an 8-bit
//! value `v` becomes `v.0`; no rescaling). Color PNG input is rejected
//! unless luma conversion is requested explicitly. Output is always
//! 8-bit: samples are clamped to `[0, 255]` and rounded half away from
//! zero ([`denoise_core::image::quantize_u8`]), bit-exact across runs.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use denoise_core::image::quantize_u8;
use denoise_core::ImagePlane;
use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::CliError;

/// Loads a grayscale image, dispatching on the file's magic bytes.
pub fn load_image(path: &Path) -> Result<ImagePlane, CliError> {
    load_image_impl(path, false)
}

/// Like [`load_image`] but converts color PNG input to luminance
/// (Rec. 601 weights) instead of failing.
pub fn load_image_luma(path: &Path) -> Result<ImagePlane, CliError> {
    load_image_impl(path, true)
}

fn load_image_impl(path: &Path, luma: bool) -> Result<ImagePlane, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &bytes, luma)
    } else {
        Err(CliError::format(
            path,
            "unsupported format (expected binary PGM `P5` or PNG)",
        ))
    }
}

/// Saves as 8-bit grayscale; the format follows the file extension
/// (`.pgm` or `.png`).
pub fn save_image(img: &ImagePlane, path: &Path) -> Result<(), CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => save_pgm(img, path),
        Some("png") => save_png(img, path),
        _ => Err(CliError::format(
            path,
            "unsupported output extension (use .pgm or .png)",
        )),
    }
}

fn quantize(img: &ImagePlane) -> Vec<u8> {
    img.as_slice().iter().map(|&v| quantize_u8(v)).collect()
}

fn save_pgm(img: &ImagePlane, path: &Path) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    file.write_all(header.as_bytes())
        .and_then(|_| file.write_all(&quantize(img)))
        .map_err(|e| CliError::io(path, e))
}

fn save_png(img: &ImagePlane, path: &Path) -> Result<(), CliError> {
    let buffer: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, quantize(img))
            .expect("buffer length matches dimensions");
    buffer
        .save(path)
        .map_err(|e| CliError::format(path, e.to_string()))
}

fn decode_png(path: &Path, bytes: &[u8], luma: bool) -> Result<ImagePlane, CliError> {
    let decoded = image::load_from_memory(bytes).map_err(|e| CliError::format(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let samples: Vec<f64> = match &decoded {
        DynamicImage::ImageLuma8(p) => p.pixels().map(|px| px.0[0] as f64).collect(),
        DynamicImage::ImageLuma16(p) => p.pixels().map(|px| px.0[0] as f64).collect(),
        DynamicImage::ImageLumaA8(p) => p.pixels().map(|px| px.0[0] as f64).collect(),
        DynamicImage::ImageLumaA16(p) => p.pixels().map(|px| px.0[0] as f64).collect(),
        _ if luma => {
            // Rec. 601 luminance from the color channels.
            let rgb = decoded.to_rgb32f();
            rgb.pixels()
                .map(|px| {
                    let [r, g, b] = px.0;
                    255.0 * (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
                })
                .collect()
        }
        _ => return Err(CliError::ColorWithoutLumaFlag { path: path.into() }),
    };
    ImagePlane::from_samples(w, h, samples).map_err(CliError::Image)
}

/// Binary PGM decoder. Header tokens may be separated by any whitespace
/// and `#` comments; `maxval` above 255 selects two-byte big-endian
/// samples.
fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<ImagePlane, CliError> {
    let mut pos = 2usize; // past "P5"
    let token = |pos: &mut usize| -> Result<usize, CliError> {
        // Skip whitespace and comment lines.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(CliError::format(path, "malformed PGM header"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::format(path, "malformed PGM header"))
    };

    let width = token(&mut pos)?;
    let height = token(&mut pos)?;
    let maxval = token(&mut pos)?;
    if width == 0 || height == 0 {
        return Err(CliError::format(path, "empty image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(CliError::format(path, format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates header and raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(CliError::format(path, "malformed PGM header"));
    }
    pos += 1;

    let n = width * height;
    let data = &bytes[pos..];
    let samples: Vec<f64> = if maxval <= 255 {
        if data.len() < n {
            return Err(CliError::format(
                path,
                format!("truncated raster: {} of {} bytes", data.len(), n),
            ));
        }
        data[..n].iter().map(|&b| b as f64).collect()
    } else {
        if data.len() < 2 * n {
            return Err(CliError::format(
                path,
                format!("truncated raster: {} of {} bytes", data.len(), 2 * n),
            ));
        }
        data[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    ImagePlane::from_samples(width, height, samples).map_err(CliError::Image)
}
