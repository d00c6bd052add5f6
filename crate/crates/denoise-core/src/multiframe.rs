//! Multi-frame extension strategies over registered stacks.
//!
//! Four executable strategies combine a single-frame filter with the
//! temporal dimension:
//!
//! * [`run_af`] — temporal average, then one single-frame filtering pass
//!   at the reduced noise level `sigma / sqrt(L)`,
//! * [`run_fa`] — filter every frame at full sigma, then average,
//! * [`run_sf`] — grouping across all frames, reference patches and output
//!   on one frame,
//! * [`run_mf`] — reference patches on every frame, all frames denoised.
//!
//! A fifth strategy (combined filtering of spatio-temporal volumes, "CF")
//! is a reserved method id: dispatching it returns a structured
//! unsupported-method error, and published values for it are only consumed
//! as comparison data.
//!
//! Every strategy at `L = 1` degenerates bit-identically to the underlying
//! single-frame filter.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bm3d::{bm3d_denoise, Bm3dParams};
use crate::engine::{FilterError, GroupingMode};
use crate::flow::{register_stack, FlowError, FlowParams};
use crate::image::ImagePlane;
use crate::math;
use crate::nlb::{nlb_denoise, NlbParams};

/// An ordered stack of same-sized frames plus registration state.
#[derive(Debug, Clone)]
pub struct FrameStack {
    frames: Vec<ImagePlane>,
    /// All frames live in the same coordinate frame (required by the
    /// extension strategies).
    pub registered: bool,
    /// Reference frame for single-reference filtering, flow registration
    /// and reported output.
    pub ref_index: usize,
    /// Per-frame validity masks from warping; `None` means fully valid.
    pub validity: Option<Vec<Vec<bool>>>,
}

impl FrameStack {
    /// Non-registered stack (frames as captured).
    pub fn new(frames: Vec<ImagePlane>) -> Result<Self, FilterError> {
        Self::build(frames, false)
    }

    /// Stack whose frames are already aligned (e.g. independent noise
    /// realizations of one scene).
    pub fn registered(frames: Vec<ImagePlane>) -> Result<Self, FilterError> {
        Self::build(frames, true)
    }

    fn build(frames: Vec<ImagePlane>, registered: bool) -> Result<Self, FilterError> {
        if frames.is_empty() {
            return Err(FilterError::EmptyStack);
        }
        let dims = frames[0].dimensions();
        if frames.iter().any(|f| f.dimensions() != dims) {
            return Err(FilterError::MixedDimensions);
        }
        Ok(FrameStack {
            frames,
            registered,
            ref_index: 0,
            validity: None,
        })
    }

    pub fn with_ref_index(mut self, ref_index: usize) -> Self {
        assert!(ref_index < self.frames.len());
        self.ref_index = ref_index;
        self
    }

    pub fn frames(&self) -> &[ImagePlane] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dimensions(&self) -> (usize, usize) {
        self.frames[0].dimensions()
    }
}

/// Single-frame filter family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Bm3d,
    Nlb,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::Bm3d => write!(f, "BM3D"),
            FilterKind::Nlb => write!(f, "NLB"),
        }
    }
}

/// Multi-frame extension strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    Af,
    Fa,
    Sf,
    Mf,
    /// MF with doubled maximum group sizes (BM3D only).
    Mfo,
    /// Reserved: combined filtering of 3D spatio-temporal patches.
    Cf,
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Extension::Af => "AF",
            Extension::Fa => "FA",
            Extension::Sf => "SF",
            Extension::Mf => "MF",
            Extension::Mfo => "MFO",
            Extension::Cf => "CF",
        };
        write!(f, "{s}")
    }
}

/// A filter x extension combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodId {
    pub filter: FilterKind,
    pub extension: Extension,
}

impl MethodId {
    pub fn new(filter: FilterKind, extension: Extension) -> Result<Self, PipelineError> {
        if extension == Extension::Mfo && filter != FilterKind::Bm3d {
            return Err(PipelineError::InvalidMethod {
                reason: String::from("the oversized-group preset is defined for BM3D only"),
            });
        }
        Ok(MethodId { filter, extension })
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.filter, self.extension)
    }
}

/// Filter parameterization handed to the extensions. `Default` derives the
/// base-method parameters from the sigma in effect at each stage (so AF
/// picks them for the reduced sigma); explicit parameters keep every field
/// and only have their sigma stamped by the pipeline.
#[derive(Debug, Clone)]
pub enum FilterSpec {
    Default(FilterKind),
    ExplicitBm3d(Bm3dParams),
    ExplicitNlb(NlbParams),
}

impl FilterSpec {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSpec::Default(k) => *k,
            FilterSpec::ExplicitBm3d(_) => FilterKind::Bm3d,
            FilterSpec::ExplicitNlb(_) => FilterKind::Nlb,
        }
    }

    fn resolve(&self, sigma: f64, oversized: bool) -> ResolvedFilter {
        match self {
            FilterSpec::Default(FilterKind::Bm3d) => {
                let p = if oversized {
                    Bm3dParams::oversized(sigma)
                } else {
                    Bm3dParams::new(sigma)
                };
                ResolvedFilter::Bm3d(p)
            }
            FilterSpec::Default(FilterKind::Nlb) => ResolvedFilter::Nlb(NlbParams::new(sigma)),
            FilterSpec::ExplicitBm3d(p) => {
                let mut p = p.clone();
                p.sigma = sigma;
                if oversized {
                    p.n1 *= 2;
                    p.n2 *= 2;
                }
                ResolvedFilter::Bm3d(p)
            }
            FilterSpec::ExplicitNlb(p) => {
                let mut p = p.clone();
                p.sigma = sigma;
                ResolvedFilter::Nlb(p)
            }
        }
    }
}

enum ResolvedFilter {
    Bm3d(Bm3dParams),
    Nlb(NlbParams),
}

impl ResolvedFilter {
    fn denoise(
        &self,
        frames: &[ImagePlane],
        mode: GroupingMode,
    ) -> Result<Vec<ImagePlane>, FilterError> {
        match self {
            ResolvedFilter::Bm3d(p) => bm3d_denoise(frames, p, mode),
            ResolvedFilter::Nlb(p) => nlb_denoise(frames, p, mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    /// The extension strategies require a registered stack.
    NotRegistered,
    /// Dispatch of a reserved method id (the combined-filtering slot).
    UnsupportedMethod { name: String },
    InvalidMethod { reason: String },
    Filter(FilterError),
    Flow(FlowError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::NotRegistered => {
                write!(f, "stack must be registered before multi-frame filtering")
            }
            PipelineError::UnsupportedMethod { name } => {
                write!(
                    f,
                    "method {name} is an interface slot without an implementation; \
                     published values for it are comparison data only"
                )
            }
            PipelineError::InvalidMethod { reason } => write!(f, "invalid method: {reason}"),
            PipelineError::Filter(e) => write!(f, "filter error: {e}"),
            PipelineError::Flow(e) => write!(f, "flow error: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PipelineError {}

impl From<FilterError> for PipelineError {
    fn from(e: FilterError) -> Self {
        PipelineError::Filter(e)
    }
}

impl From<FlowError> for PipelineError {
    fn from(e: FlowError) -> Self {
        PipelineError::Flow(e)
    }
}

/// Result of validity-aware temporal averaging.
#[derive(Debug, Clone)]
pub struct TemporalAverage {
    pub plane: ImagePlane,
    /// Scalar noise level after averaging, `sigma / sqrt(L)`. Exact when
    /// `uniform` holds, an approximation otherwise.
    pub effective_sigma: f64,
    /// Smallest number of valid frames contributing to any pixel.
    pub min_valid: usize,
    /// True when every pixel averaged all `L` frames.
    pub uniform: bool,
    /// Pixels with no valid frame at all, filled from the reference frame.
    pub filled_from_reference: usize,
}

/// Pixelwise mean across frames, honoring warp validity masks. Pixels
/// without any valid frame take the reference frame value.
pub fn temporal_average(stack: &FrameStack, sigma: f64) -> TemporalAverage {
    let (w, h) = stack.dimensions();
    let l = stack.len();
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    for (f, frame) in stack.frames.iter().enumerate() {
        let mask = stack.validity.as_ref().map(|m| &m[f]);
        for (i, &v) in frame.as_slice().iter().enumerate() {
            if mask.is_none_or(|m| m[i]) {
                sum[i] += v;
                count[i] += 1;
            }
        }
    }
    let mut plane = ImagePlane::zeros(w, h);
    let mut min_valid = l;
    let mut filled = 0usize;
    let reference = &stack.frames[stack.ref_index];
    for (i, out) in plane.as_mut_slice().iter_mut().enumerate() {
        let c = count[i] as usize;
        if c == 0 {
            *out = reference.as_slice()[i];
            filled += 1;
            min_valid = 0;
        } else {
            *out = sum[i] / c as f64;
            min_valid = min_valid.min(c);
        }
    }
    TemporalAverage {
        plane,
        effective_sigma: sigma / math::sqrt(l as f64),
        min_valid,
        uniform: min_valid == l,
        filled_from_reference: filled,
    }
}

/// Validity-aware mean of already-denoised frames (the FA recomposition).
fn masked_average(frames: &[ImagePlane], stack: &FrameStack) -> ImagePlane {
    let shell = FrameStack {
        frames: frames.to_vec(),
        registered: true,
        ref_index: stack.ref_index,
        validity: stack.validity.clone(),
    };
    temporal_average(&shell, 0.0).plane
}

fn require_registered(stack: &FrameStack) -> Result<(), PipelineError> {
    if stack.registered {
        Ok(())
    } else {
        Err(PipelineError::NotRegistered)
    }
}

/// Average then filter: one single-frame pass on the temporal mean, with
/// the filter parameterized for the reduced noise level. The
/// `sigma / sqrt(L)` substitution is what makes this strategy work; it is
/// applied unconditionally.
pub fn run_af(stack: &FrameStack, filter: &FilterSpec, sigma: f64) -> Result<ImagePlane, PipelineError> {
    require_registered(stack)?;
    let averaged = temporal_average(stack, sigma);
    let resolved = filter.resolve(averaged.effective_sigma, false);
    let mut out = resolved.denoise(core::slice::from_ref(&averaged.plane), GroupingMode::SingleFrame)?;
    Ok(out.remove(0))
}

/// Filter then average: every frame denoised independently at full sigma,
/// then the validity-aware mean.
pub fn run_fa(stack: &FrameStack, filter: &FilterSpec, sigma: f64) -> Result<ImagePlane, PipelineError> {
    require_registered(stack)?;
    let resolved = filter.resolve(sigma, false);
    let mut denoised = Vec::with_capacity(stack.len());
    for frame in stack.frames() {
        let mut out = resolved.denoise(core::slice::from_ref(frame), GroupingMode::SingleFrame)?;
        denoised.push(out.remove(0));
    }
    Ok(masked_average(&denoised, stack))
}

/// Single-reference filtering: reference patches on `stack.ref_index`,
/// similar patches from all frames.
pub fn run_sf(stack: &FrameStack, filter: &FilterSpec, sigma: f64) -> Result<ImagePlane, PipelineError> {
    require_registered(stack)?;
    let resolved = filter.resolve(sigma, false);
    let mode = if stack.len() == 1 {
        GroupingMode::SingleFrame
    } else {
        GroupingMode::SingleReference {
            ref_frame: stack.ref_index,
        }
    };
    let mut out = resolved.denoise(stack.frames(), mode)?;
    Ok(out.remove(0))
}

/// Multi-reference filtering: reference patches on every frame, all frames
/// denoised. Returns the full stack plus the designated output index.
pub fn run_mf(
    stack: &FrameStack,
    filter: &FilterSpec,
    sigma: f64,
    oversized: bool,
) -> Result<(Vec<ImagePlane>, usize), PipelineError> {
    require_registered(stack)?;
    let resolved = filter.resolve(sigma, oversized);
    let mode = if stack.len() == 1 {
        GroupingMode::SingleFrame
    } else {
        GroupingMode::MultiReference
    };
    let out = resolved.denoise(stack.frames(), mode)?;
    Ok((out, stack.ref_index))
}

/// Full pipeline: register when needed, then dispatch the extension.
/// Pre-registered input skips the flow stage entirely.
pub fn run_pipeline(
    stack: &FrameStack,
    method: MethodId,
    flow_params: &FlowParams,
    filter: &FilterSpec,
    sigma: f64,
) -> Result<ImagePlane, PipelineError> {
    if method.extension == Extension::Cf {
        return Err(PipelineError::UnsupportedMethod {
            name: alloc::format!("{method}"),
        });
    }
    if method.extension == Extension::Mfo && method.filter != FilterKind::Bm3d {
        return Err(PipelineError::InvalidMethod {
            reason: String::from("the oversized-group preset is defined for BM3D only"),
        });
    }

    let registered;
    let stack = if stack.registered {
        stack
    } else {
        let (frames, masks) = register_stack(stack.frames(), stack.ref_index, flow_params)?;
        registered = FrameStack {
            frames,
            registered: true,
            ref_index: stack.ref_index,
            validity: Some(masks),
        };
        &registered
    };

    match method.extension {
        Extension::Af => run_af(stack, filter, sigma),
        Extension::Fa => run_fa(stack, filter, sigma),
        Extension::Sf => run_sf(stack, filter, sigma),
        Extension::Mf | Extension::Mfo => {
            let (frames, index) = run_mf(
                stack,
                filter,
                sigma,
                method.extension == Extension::Mfo,
            )?;
            Ok(frames.into_iter().nth(index).expect("index in range"))
        }
        Extension::Cf => unreachable!("rejected above"),
    }
}
