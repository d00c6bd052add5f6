//! Patch-based grayscale denoising for single images and multi-frame stacks.
//!
//! The crate implements two classical two-step collaborative filters —
//! BM3D (transform-domain hard thresholding + Wiener shrinkage) and
//! non-local Bayes (Gaussian patch models in both steps) — together with
//! four strategies that extend them to stacks of frames showing the same
//! scene:
//!
//! * **AF** — average the registered frames, then filter once at the
//!   reduced noise level `sigma / sqrt(L)`,
//! * **FA** — filter every frame, then average,
//! * **SF** — reference patches from a single frame, similar patches from
//!   all frames,
//! * **MF** — reference patches from every frame, aggregation back onto
//!   every frame.
//!
//! Non-aligned stacks are registered beforehand with a robust variational
//! optical-flow solver ([`flow`]).
//!
//! The crate is `no_std`-compatible (an allocator is required): disable
//! default features and enable `libm`. With the default `parallel`
//! feature, patch groups are processed on a rayon pool; results are
//! bit-identical for any worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("denoise-core requires either the `std` or the `libm` feature");

pub mod aggregate;
pub mod bm3d;
pub mod eigen;
pub mod flow;
pub mod image;
pub mod multiframe;
pub mod nlb;
pub mod noise;
pub mod patch;
pub mod transform;

mod engine;
mod math;
mod util;

pub use engine::{FilterError, GroupingMode};
pub use image::ImagePlane;
pub use multiframe::FrameStack;
