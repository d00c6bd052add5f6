//! Seeded additive white Gaussian noise.
//!
//! Noise is generated counter-style: pixel `i` reads positions `2i` and
//! `2i+1` of a SplitMix64 stream, so the result is independent of
//! iteration order and identical for any worker count. Samples are left
//! unclamped; quantization happens only when an image is written out.

use crate::image::ImagePlane;
use crate::math;

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

/// AWGN parameters: standard deviation in gray levels plus the seed that
/// makes the corruption reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Self {
        assert!(sigma >= 0.0, "sigma must be non-negative");
        NoiseSpec { sigma, seed }
    }
}

/// SplitMix64 output at stream position `pos` for the given seed.
#[inline]
fn splitmix_at(seed: u64, pos: u64) -> u64 {
    let mut z = seed.wrapping_add(pos.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Standard normal deviate for pixel `index` (Box-Muller on two stream
/// positions).
#[inline]
fn standard_normal(seed: u64, index: u64) -> f64 {
    let z1 = splitmix_at(seed, 2 * index);
    let z2 = splitmix_at(seed, 2 * index + 1);
    // u1 in (0, 1] keeps the log finite; u2 in [0, 1).
    let u1 = ((z1 >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (z2 >> 11) as f64 / (1u64 << 53) as f64;
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Derives an independent sub-seed, e.g. one per frame of a stack.
/// The mix is a double application of the SplitMix64 finalizer, so nearby
/// indices produce unrelated streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix_at(seed ^ splitmix_at(index, 0), 1)
}

/// Returns `img + n` with `n[i]` i.i.d. `N(0, sigma^2)`.
pub fn add_awgn(img: &ImagePlane, spec: NoiseSpec) -> ImagePlane {
    assert!(spec.sigma >= 0.0, "sigma must be non-negative");
    let mut out = img.clone();
    if spec.sigma == 0.0 {
        return out;
    }
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        *v += spec.sigma * standard_normal(spec.seed, i as u64);
    }
    out
}
