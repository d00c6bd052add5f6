//! Robust variational optical flow with coarse-to-fine warping.
//!
//! The solver minimizes a convex energy that penalizes deviations in gray
//! values and in gradients, both wrapped in the robust penalizer
//! `psi(s^2) = sqrt(s^2 + eps^2)`, plus an image-driven smoothness term.
//! Three regularization variants differ only in the smoothness function:
//! a decreasing scalar (variant 1), the same with a minimum-diffusion
//! floor (variant 2), and the floored form with the contrast parameter
//! picked automatically from the gradient distribution (variant 3).
//!
//! Each pyramid level linearizes the data terms around the current warp,
//! lags the penalizer derivatives, and solves the linear system with
//! red-black successive over-relaxation.

mod solve;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::image::ImagePlane;
use crate::math;

pub use solve::{solve_flow, solve_flow_with_energies};

/// Dense per-pixel displacement field. `(u, v)` moves a position in the
/// first frame to its match in the second.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn from_components(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(u.len(), width * height);
        assert_eq!(v.len(), width * height);
        FlowField { width, height, u, v }
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

    #[inline(always)]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    #[inline(always)]
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Largest displacement magnitude component.
    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0f64, |m, &x| m.max(math::abs(x)))
    }
}

/// Smoothness-function variant of the regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SofVariant {
    /// Decreasing scalar weight `1 / sqrt(1 + |grad|^2 / lambda^2)`.
    Sof1,
    /// The variant-1 weight floored, so some isotropic diffusion survives
    /// arbitrarily large gradients.
    Sof2,
    /// Variant-2 form with `lambda` picked per level as a fixed quantile
    /// of the gradient magnitude.
    #[default]
    Sof3,
}

/// Where the robust penalizer sits in the smoothness term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothnessForm {
    /// `alpha * psi(phi * (|grad u|^2 + |grad v|^2))`.
    #[default]
    PsiOfWeighted,
    /// `alpha * phi * psi(|grad u|^2 + |grad v|^2)`.
    PhiTimesPsi,
}

/// Flow solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Smoothness weight.
    pub alpha: f64,
    /// Gradient-constancy weight.
    pub gamma: f64,
    /// Contrast parameter of the smoothness function (variants 1 and 2;
    /// variant 3 selects it per level).
    pub lambda: f64,
    /// Penalizer offset keeping the energy strictly convex.
    pub epsilon: f64,
    pub variant: SofVariant,
    pub smoothness_form: SmoothnessForm,
    /// Minimum diffusion of variants 2 and 3.
    pub sof2_floor: f64,
    /// Gradient-magnitude quantile used by variant 3.
    pub sof3_quantile: f64,
    /// Per-level downsampling factor in (0, 1).
    pub pyramid_scale: f64,
    /// Maximum pyramid depth; levels also stop once the smaller image side
    /// would drop below 16 pixels.
    pub levels: usize,
    /// Gaussian presmoothing of the two input frames.
    pub presmooth_sigma: f64,
    /// Warp linearizations per level.
    pub outer_iters: usize,
    /// Penalizer-lagging updates per warp.
    pub inner_iters: usize,
    /// Red-black SOR sweeps per lagged system.
    pub solver_iters: usize,
    /// SOR relaxation factor in (0, 2).
    pub omega: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            alpha: 100.0,
            gamma: 1.0,
            lambda: 0.1,
            epsilon: 1e-3,
            variant: SofVariant::Sof3,
            smoothness_form: SmoothnessForm::PsiOfWeighted,
            sof2_floor: 0.05,
            sof3_quantile: 0.90,
            pyramid_scale: 0.5,
            levels: 100,
            presmooth_sigma: 0.8,
            outer_iters: 5,
            inner_iters: 1,
            solver_iters: 30,
            omega: 1.95,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = self.alpha > 0.0
            && self.gamma >= 0.0
            && self.epsilon > 0.0
            && self.pyramid_scale > 0.0
            && self.pyramid_scale < 1.0
            && self.omega > 0.0
            && self.omega < 2.0
            && self.outer_iters >= 1
            && self.inner_iters >= 1
            && self.solver_iters >= 1;
        if ok {
            Ok(())
        } else {
            Err(FlowError::BadParams)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowError {
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    NonFiniteInput,
    BadParams,
    EmptyGrid,
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::DimensionMismatch { a, b } => {
                write!(f, "frame sizes differ: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)
            }
            FlowError::NonFiniteInput => write!(f, "input contains non-finite samples"),
            FlowError::BadParams => write!(f, "flow parameters out of range"),
            FlowError::EmptyGrid => write!(f, "parameter grid is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FlowError {}

/// Robust penalizer `sqrt(s^2 + eps^2)` of a squared residual.
pub fn psi(s2: f64, epsilon: f64) -> f64 {
    math::sqrt(s2 + epsilon * epsilon)
}

/// Derivative of [`psi`] with respect to the squared residual.
pub fn psi_prime(s2: f64, epsilon: f64) -> f64 {
    1.0 / (2.0 * math::sqrt(s2 + epsilon * epsilon))
}

/// Image-driven smoothness weight for one gradient of the first frame.
/// `lambda` must be positive; for [`SofVariant::Sof3`] pass the
/// auto-selected value (see [`sof3_lambda`]).
pub fn smoothness_weight(grad: (f64, f64), lambda: f64, variant: SofVariant, floor: f64) -> f64 {
    let g2 = grad.0 * grad.0 + grad.1 * grad.1;
    let decreasing = 1.0 / math::sqrt(1.0 + g2 / (lambda * lambda));
    match variant {
        SofVariant::Sof1 => decreasing,
        SofVariant::Sof2 | SofVariant::Sof3 => decreasing.max(floor),
    }
}

/// Contrast parameter for variant 3: the given quantile of the gradient
/// magnitude over the frame (floored away from zero).
pub fn sof3_lambda(frame: &ImagePlane, quantile: f64) -> f64 {
    let (w, h) = frame.dimensions();
    let mut mags = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = central_gradient(frame, x, y);
            mags.push(math::hypot(gx, gy));
        }
    }
    mags.sort_unstable_by(f64::total_cmp);
    let idx = ((mags.len() - 1) as f64 * quantile.clamp(0.0, 1.0)) as usize;
    mags[idx].max(1e-6)
}

/// Central difference gradient with replicated borders.
#[inline]
pub(crate) fn central_gradient(frame: &ImagePlane, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = frame.dimensions();
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(w - 1);
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(h - 1);
    (
        0.5 * (frame.get(xp, y) - frame.get(xm, y)),
        0.5 * (frame.get(x, yp) - frame.get(x, ym)),
    )
}

/// Bilinear warp of `frame` by `flow`: `out(x) = frame(x + w(x))`.
///
/// Sample positions outside the frame are marked invalid in the returned
/// mask and filled with the nearest valid value (coordinate clamping).
pub fn warp(frame: &ImagePlane, flow: &FlowField) -> Result<(ImagePlane, Vec<bool>), FlowError> {
    if frame.dimensions() != flow.dimensions() {
        return Err(FlowError::DimensionMismatch {
            a: frame.dimensions(),
            b: flow.dimensions(),
        });
    }
    let (w, h) = frame.dimensions();
    let mut out = ImagePlane::zeros(w, h);
    let mut valid = vec![true; w * h];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let sx = x as f64 + u;
            let sy = y as f64 + v;
            if sx < 0.0 || sx > (w - 1) as f64 || sy < 0.0 || sy > (h - 1) as f64 {
                valid[y * w + x] = false;
            }
            out.set(x, y, sample_bilinear_clamped(frame, sx, sy));
        }
    }
    Ok((out, valid))
}

/// Bilinear sample with coordinates clamped to the frame.
#[inline]
pub(crate) fn sample_bilinear_clamped(frame: &ImagePlane, x: f64, y: f64) -> f64 {
    let (w, h) = frame.dimensions();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = math::floor(x) as usize;
    let y0 = math::floor(y) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = frame.get(x0, y0) * (1.0 - fx) + frame.get(x1, y0) * fx;
    let bottom = frame.get(x0, y1) * (1.0 - fx) + frame.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Ground-truth values at least this large mark unknown flow in benchmark
/// data and are skipped by the error metric.
pub const UNKNOWN_FLOW: f64 = 1e9;

/// Mean endpoint error against a ground-truth field, skipping unknown
/// ground-truth pixels. Returns `None` when nothing is comparable.
pub fn endpoint_error(estimate: &FlowField, truth: &FlowField) -> Option<f64> {
    if estimate.dimensions() != truth.dimensions() {
        return None;
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..truth.u.len() {
        if math::abs(truth.u[i]) >= UNKNOWN_FLOW || math::abs(truth.v[i]) >= UNKNOWN_FLOW {
            continue;
        }
        acc += math::hypot(estimate.u[i] - truth.u[i], estimate.v[i] - truth.v[i]);
        n += 1;
    }
    (n > 0).then(|| acc / n as f64)
}

/// Warps every frame onto the coordinate frame of `frames[ref_index]`
/// via pairwise flow (reference to frame). The reference passes through
/// untouched with an all-valid mask.
pub fn register_stack(
    frames: &[ImagePlane],
    ref_index: usize,
    params: &FlowParams,
) -> Result<(Vec<ImagePlane>, Vec<Vec<bool>>), FlowError> {
    assert!(ref_index < frames.len(), "reference index out of range");
    let reference = &frames[ref_index];
    let mut registered = Vec::with_capacity(frames.len());
    let mut masks = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        if i == ref_index {
            registered.push(frame.clone());
            masks.push(vec![true; frame.as_slice().len()]);
            continue;
        }
        let flow = solve_flow(reference, frame, params)?;
        let (warped, mask) = warp(frame, &flow)?;
        registered.push(warped);
        masks.push(mask);
    }
    Ok((registered, masks))
}

/// Outcome of a parameter search.
#[derive(Debug, Clone)]
pub struct TunedFlow {
    pub params: FlowParams,
    pub cost: f64,
}

/// Exhaustive search over a parameter grid, minimizing `cost` (endpoint
/// error, negated PSNR, ...). Exact cost ties resolve toward larger
/// `alpha`.
pub fn tune_flow_params(
    grid: &[FlowParams],
    mut cost: impl FnMut(&FlowParams) -> f64,
) -> Result<TunedFlow, FlowError> {
    let mut best: Option<TunedFlow> = None;
    for candidate in grid {
        candidate.validate()?;
        let c = cost(candidate);
        let better = match &best {
            None => true,
            Some(b) => c < b.cost || (c == b.cost && candidate.alpha > b.params.alpha),
        };
        if better {
            best = Some(TunedFlow {
                params: *candidate,
                cost: c,
            });
        }
    }
    best.ok_or(FlowError::EmptyGrid)
}
