//! Flow visualization with the standard optical-flow color wheel
//! (hue encodes direction, saturation encodes magnitude).

use std::path::Path;

use denoise_core::flow::{FlowField, UNKNOWN_FLOW};

use crate::error::CliError;

/// Segment lengths of the color wheel: RY, YG, GC, CB, BM, MR.
const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

fn color_wheel() -> Vec<[f64; 3]> {
    let ncols: usize = SEGMENTS.iter().sum();
    let mut wheel = vec![[0.0; 3]; ncols];
    let mut col = 0;
    let ramp = |i: usize, n: usize| 255.0 * i as f64 / n as f64;
    for i in 0..SEGMENTS[0] {
        wheel[col + i] = [255.0, ramp(i, SEGMENTS[0]), 0.0];
    }
    col += SEGMENTS[0];
    for i in 0..SEGMENTS[1] {
        wheel[col + i] = [255.0 - ramp(i, SEGMENTS[1]), 255.0, 0.0];
    }
    col += SEGMENTS[1];
    for i in 0..SEGMENTS[2] {
        wheel[col + i] = [0.0, 255.0, ramp(i, SEGMENTS[2])];
    }
    col += SEGMENTS[2];
    for i in 0..SEGMENTS[3] {
        wheel[col + i] = [0.0, 255.0 - ramp(i, SEGMENTS[3]), 255.0];
    }
    col += SEGMENTS[3];
    for i in 0..SEGMENTS[4] {
        wheel[col + i] = [ramp(i, SEGMENTS[4]), 0.0, 255.0];
    }
    col += SEGMENTS[4];
    for i in 0..SEGMENTS[5] {
        wheel[col + i] = [255.0, 0.0, 255.0 - ramp(i, SEGMENTS[5])];
    }
    wheel
}

/// Renders the field to RGB. Magnitudes are normalized by the largest
/// known displacement; unknown pixels render black.
pub fn render_flow(flow: &FlowField) -> image::RgbImage {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let (w, h) = flow.dimensions();

    let mut max_rad = 1e-9f64;
    for (u, v) in flow.u().iter().zip(flow.v()) {
        if u.abs() < UNKNOWN_FLOW && v.abs() < UNKNOWN_FLOW {
            max_rad = max_rad.max(u.hypot(*v));
        }
    }

    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (u, v) = flow.get(x as usize, y as usize);
        if u.abs() >= UNKNOWN_FLOW || v.abs() >= UNKNOWN_FLOW {
            return image::Rgb([0, 0, 0]);
        }
        let rad = (u.hypot(v) / max_rad).min(1.0);
        let angle = (-v).atan2(-u) / core::f64::consts::PI;
        let fk = (angle + 1.0) / 2.0 * (ncols - 1) as f64;
        let k0 = fk.floor() as usize;
        let k1 = (k0 + 1) % ncols;
        let f = fk - k0 as f64;
        let mut px = [0u8; 3];
        for c in 0..3 {
            let col = (wheel[k0][c] * (1.0 - f) + wheel[k1][c] * f) / 255.0;
            // Desaturate toward white for small motions.
            let col = 1.0 - rad * (1.0 - col);
            px[c] = (255.0 * col).round() as u8;
        }
        image::Rgb(px)
    })
}

pub fn write_flow_png(flow: &FlowField, path: &Path) -> Result<(), CliError> {
    render_flow(flow)
        .save(path)
        .map_err(|e| CliError::format(path, e.to_string()))
}
