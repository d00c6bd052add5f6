//! Grayscale image plane and quality metrics.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// A single grayscale frame with row-major `f64` samples.
///
/// Samples nominally live in `[0, 255]` but are not clamped: intermediate
/// processing (noise addition, filtering, averaging) may leave the range.
/// Quantization to 8-bit happens only through [`quantize_u8`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

/// Errors for plane construction and metric evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageError {
    /// Width or height is zero.
    EmptyPlane,
    /// `samples.len() != width * height`.
    SampleCount { expected: usize, got: usize },
    /// Two planes that must agree in size do not.
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    /// The excluded border leaves no interior pixels.
    BorderTooLarge { border: usize, limit: usize },
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::EmptyPlane => write!(f, "image dimensions must be at least 1x1"),
            ImageError::SampleCount { expected, got } => {
                write!(f, "expected {expected} samples, got {got}")
            }
            ImageError::DimensionMismatch { a, b } => {
                write!(f, "dimension mismatch: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)
            }
            ImageError::BorderTooLarge { border, limit } => {
                write!(f, "border {border} too large for min dimension {limit}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ImageError {}

impl ImagePlane {
    /// All-zero plane of the given size.
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "plane must be at least 1x1");
        ImagePlane {
            width,
            height,
            samples: vec![0.0; width * height],
        }
    }

    /// Plane from row-major samples.
    pub fn from_samples(width: usize, height: usize, samples: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyPlane);
        }
        if samples.len() != width * height {
            return Err(ImageError::SampleCount {
                expected: width * height,
                got: samples.len(),
            });
        }
        Ok(ImagePlane {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    #[inline(always)]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    #[inline(always)]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.samples[y * self.width + x] = v;
    }

    /// True when all samples are finite.
    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    /// Rectangular copy. `x + w <= width`, `y + h <= height`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> ImagePlane {
        assert!(x + w <= self.width && y + h <= self.height, "crop out of bounds");
        let mut samples = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            samples.extend_from_slice(&self.samples[start..start + w]);
        }
        ImagePlane {
            width: w,
            height: h,
            samples,
        }
    }
}

/// Quantizes one sample for 8-bit output: clamp to `[0, 255]`, then round
/// half away from zero. The clamp runs first, so `-3.2` maps to `0` and
/// `255.7` to `255`; `127.5` maps to `128`.
pub fn quantize_u8(v: f64) -> u8 {
    let c = v.clamp(0.0, 255.0);
    math::floor(c + 0.5) as u8
}

/// Mean squared error over the interior that excludes `border` pixels on
/// all four sides.
pub fn mse(a: &ImagePlane, b: &ImagePlane, border: usize) -> Result<f64, ImageError> {
    if a.dimensions() != b.dimensions() {
        return Err(ImageError::DimensionMismatch {
            a: a.dimensions(),
            b: b.dimensions(),
        });
    }
    let limit = a.width.min(a.height);
    if 2 * border >= limit {
        return Err(ImageError::BorderTooLarge { border, limit });
    }
    let mut acc = 0.0;
    for y in border..a.height - border {
        for x in border..a.width - border {
            let d = a.get(x, y) - b.get(x, y);
            acc += d * d;
        }
    }
    let n = (a.width - 2 * border) * (a.height - 2 * border);
    Ok(acc / n as f64)
}

/// Peak signal-to-noise ratio in dB with peak fixed at 255, over the
/// interior that excludes `border` pixels on all four sides.
///
/// Returns `f64::INFINITY` when the planes agree exactly on the interior.
pub fn psnr(reference: &ImagePlane, test: &ImagePlane, border: usize) -> Result<f64, ImageError> {
    let e = mse(reference, test, border)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(255.0 * 255.0 / e))
}
