//! File formats, experiment harness and CLI plumbing around
//! [`denoise_core`].
//!
//! The library half of this crate reads and writes grayscale PGM/PNG
//! images and Middlebury `.flo` flow fields, renders flow visualizations,
//! synthesizes noisy benchmark stacks, runs method grids and compares the
//! resulting PSNR records against published reference tables shipped as
//! plain-text data files.

pub mod compare;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod flo;
pub mod flowviz;
pub mod imageio;

pub use error::CliError;
