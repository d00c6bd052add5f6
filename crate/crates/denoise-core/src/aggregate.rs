//! Weighted patch aggregation into per-frame numerator/denominator buffers.
//!
//! Every filtered patch scatters `weight * value` into the numerator and
//! `weight` into the denominator at its source frame and position; the
//! final image is the elementwise quotient. BM3D supplies per-group Wiener
//! weights, the Bayesian filter aggregates unweighted (weight one).

use alloc::vec;
use alloc::vec::Vec;

use crate::image::ImagePlane;
use crate::patch::PatchRef;

/// Per-frame weighted sums for overlapping-patch recomposition.
#[derive(Debug, Clone)]
pub struct AggregationBuffers {
    width: usize,
    height: usize,
    numerator: Vec<Vec<f64>>,
    denominator: Vec<Vec<f64>>,
}

impl AggregationBuffers {
    /// Buffers for `frames` output frames of `width x height`.
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        AggregationBuffers {
            width,
            height,
            numerator: vec![vec![0.0; width * height]; frames],
            denominator: vec![vec![0.0; width * height]; frames],
        }
    }

    pub fn frames(&self) -> usize {
        self.numerator.len()
    }

    /// Accumulates one filtered patch (`values` row-major, `size^2` long)
    /// with the given weight at its source location.
    pub fn add_patch(&mut self, at: PatchRef, values: &[f64], weight: f64) {
        debug_assert_eq!(values.len(), at.size * at.size);
        let num = &mut self.numerator[at.frame];
        let den = &mut self.denominator[at.frame];
        for row in 0..at.size {
            let base = (at.y + row) * self.width + at.x;
            let src = &values[row * at.size..(row + 1) * at.size];
            for (i, &v) in src.iter().enumerate() {
                num[base + i] += weight * v;
                den[base + i] += weight;
            }
        }
    }

    /// Pixels of `frame` with zero accumulated weight.
    pub fn uncovered(&self, frame: usize) -> usize {
        self.denominator[frame].iter().filter(|&&d| d == 0.0).count()
    }

    /// Finalizes into frames. Pixels never covered by a patch take the
    /// value of `fill` when given; without `fill`, full lattice coverage is
    /// asserted.
    pub fn finalize(self, fill: Option<&[ImagePlane]>) -> Vec<ImagePlane> {
        let mut out = Vec::with_capacity(self.numerator.len());
        for (f, (num, den)) in self.numerator.iter().zip(&self.denominator).enumerate() {
            let mut plane = ImagePlane::zeros(self.width, self.height);
            let samples = plane.as_mut_slice();
            for i in 0..num.len() {
                if den[i] > 0.0 {
                    samples[i] = num[i] / den[i];
                } else {
                    match fill {
                        Some(frames) => samples[i] = frames[f].as_slice()[i],
                        None => panic!("pixel {i} of frame {f} not covered by any patch"),
                    }
                }
            }
            out.push(plane);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_patch_weight_cancels() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        // Dyadic weight: the quotient is exact.
        let mut agg = AggregationBuffers::new(3, 3, 1);
        agg.add_patch(PatchRef::new(0, 0, 0, 3), &values, 0.5);
        let out = agg.finalize(None);
        assert_eq!(out[0].as_slice(), &values);
        // Arbitrary weight: exact up to one rounding.
        let mut agg = AggregationBuffers::new(3, 3, 1);
        agg.add_patch(PatchRef::new(0, 0, 0, 3), &values, 0.37);
        let out = agg.finalize(None);
        for (a, b) in out[0].as_slice().iter().zip(&values) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn equal_weight_overlap_averages() {
        let mut agg = AggregationBuffers::new(3, 2, 1);
        agg.add_patch(PatchRef::new(0, 0, 0, 2), &[2.0; 4], 1.5);
        agg.add_patch(PatchRef::new(0, 1, 0, 2), &[6.0; 4], 1.5);
        let out = agg.finalize(None);
        // Overlap column x=1 averages to (2+6)/2.
        assert_eq!(out[0].get(0, 0), 2.0);
        assert_eq!(out[0].get(1, 0), 4.0);
        assert_eq!(out[0].get(2, 0), 6.0);
    }

    #[test]
    fn uncovered_pixels_fill_from_source() {
        let mut agg = AggregationBuffers::new(2, 2, 1);
        agg.add_patch(PatchRef::new(0, 0, 0, 1), &[9.0], 2.0);
        assert_eq!(agg.uncovered(0), 3);
        let mut fallback = ImagePlane::zeros(2, 2);
        fallback.as_mut_slice().copy_from_slice(&[0.5, 1.5, 2.5, 3.5]);
        let out = agg.finalize(Some(core::slice::from_ref(&fallback)));
        assert_eq!(out[0].as_slice(), &[9.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    #[should_panic(expected = "not covered")]
    fn uncovered_without_fill_panics() {
        let mut agg = AggregationBuffers::new(2, 2, 1);
        agg.add_patch(PatchRef::new(0, 0, 0, 1), &[9.0], 2.0);
        let _ = agg.finalize(None);
    }
}
