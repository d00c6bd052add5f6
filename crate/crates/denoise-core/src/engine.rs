//! Shared plumbing of the two-step collaborative filters: grouping modes,
//! stack validation and aggregation targets.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::image::ImagePlane;

/// How reference patches and search windows relate to the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingMode {
    /// One frame: lattice and search both on it.
    SingleFrame,
    /// Lattice on `ref_frame` only, search across all frames, output is
    /// that single frame.
    SingleReference { ref_frame: usize },
    /// Lattice on every frame, search across all frames, every frame
    /// denoised.
    MultiReference,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterError {
    EmptyStack,
    MixedDimensions,
    RefFrameOutOfRange { ref_frame: usize, frames: usize },
    SingleFrameNeedsOneFrame { frames: usize },
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterError::EmptyStack => write!(f, "stack has no frames"),
            FilterError::MixedDimensions => write!(f, "frames differ in size"),
            FilterError::RefFrameOutOfRange { ref_frame, frames } => {
                write!(f, "reference frame {ref_frame} out of range ({frames} frames)")
            }
            FilterError::SingleFrameNeedsOneFrame { frames } => {
                write!(f, "single-frame mode needs exactly one frame, got {frames}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FilterError {}

pub(crate) fn validate_stack(frames: &[ImagePlane], mode: GroupingMode) -> Result<(), FilterError> {
    if frames.is_empty() {
        return Err(FilterError::EmptyStack);
    }
    let dims = frames[0].dimensions();
    if frames.iter().any(|f| f.dimensions() != dims) {
        return Err(FilterError::MixedDimensions);
    }
    match mode {
        GroupingMode::SingleFrame if frames.len() != 1 => {
            Err(FilterError::SingleFrameNeedsOneFrame { frames: frames.len() })
        }
        GroupingMode::SingleReference { ref_frame } if ref_frame >= frames.len() => {
            Err(FilterError::RefFrameOutOfRange {
                ref_frame,
                frames: frames.len(),
            })
        }
        _ => Ok(()),
    }
}

/// Frames carrying reference lattices for the given mode.
pub(crate) fn lattice_frames(mode: GroupingMode, frames: usize) -> Vec<usize> {
    match mode {
        GroupingMode::SingleFrame => vec![0],
        GroupingMode::SingleReference { ref_frame } => vec![ref_frame],
        GroupingMode::MultiReference => (0..frames).collect(),
    }
}

/// Frames searched for similar patches.
pub(crate) fn search_frames(mode: GroupingMode, frames: usize) -> Vec<usize> {
    match mode {
        GroupingMode::SingleFrame => vec![0],
        _ => (0..frames).collect(),
    }
}

/// Where filtered patches are written back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AggTarget {
    /// Each patch onto its own frame.
    All,
    /// Only patches lying on this frame; those become buffer frame 0.
    Only(usize),
}

/// Largest power of two not exceeding `n` (`n >= 1`).
pub(crate) fn floor_pow2(n: usize) -> usize {
    1 << (usize::BITS - 1 - n.leading_zeros())
}

/// Step-2 matching/pilot stack: step-1 estimates at the frames they
/// cover, the original frames elsewhere (single-reference mode has a
/// pilot for the reference frame only).
pub(crate) fn pilot_source(
    frames: &[ImagePlane],
    pilot: Vec<ImagePlane>,
    mode: GroupingMode,
) -> Vec<ImagePlane> {
    match mode {
        GroupingMode::SingleReference { ref_frame } => {
            let mut out: Vec<ImagePlane> = frames.to_vec();
            out[ref_frame] = pilot.into_iter().next().expect("one pilot frame");
            out
        }
        _ => pilot,
    }
}
