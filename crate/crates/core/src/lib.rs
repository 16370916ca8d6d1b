//! Methane plume feature engineering and evaluation for Sentinel-2 style
//! multiband SWIR rasters.
//!
//! The crate covers the whole classical side of a plume segmentation
//! pipeline:
//!
//! - [`raster`]: scenes, fields, masks and the BRF band-raster file format.
//! - [`enhance`]: Varon and Sánchez band ratios, the `[V, S, V]` feature
//!   stack and z-score normalization.
//! - [`synth`]: methane-free background simulation and synthetic plume
//!   injection with exact ground truth.
//! - [`labeling`]: threshold masks, connected components, contours and
//!   per-vent source attribution.
//! - [`dataset`]: augmentation, tiling, train/val splits and manifests.
//! - [`detect`]: a robust (median/MAD) baseline detector.
//! - [`evalmetrics`]: confusion counts, Dice/F1, IoU, reference losses and
//!   difference maps.
//!
//! Random draws use `ChaCha8Rng` seeded from a 64-bit seed, so every
//! stochastic step is a pure function of its inputs and seed.

pub mod dataset;
pub mod detect;
pub mod enhance;
mod error;
pub mod evalmetrics;
pub mod labeling;
mod linalg;
pub mod raster;
mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BandId, Field, Mask, Scene};
