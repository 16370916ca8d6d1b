//! Raster data model shared by every stage of the pipeline.
//!
//! All rasters are row-major. Pixel `(x, y)` lives at index `y * width + x`,
//! with `x` growing to the right and `y` growing downwards.

mod brf;
mod image;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use brf::{read_brf, write_brf, BrfObject};
pub use image::{export_image, render_rgb, Colormap, ImageSource};

/// Default Sentinel-2 SWIR ground sampling distance.
pub const DEFAULT_PIXEL_SIZE_M: f64 = 20.0;

/// Spectral band identifier such as `"B11"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandId(String);

impl BandId {
    pub fn new(id: impl Into<String>) -> Self {
        BandId(id.into())
    }

    pub fn b11() -> Self {
        BandId::new("B11")
    }

    pub fn b12() -> Self {
        BandId::new("B12")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BandId {
    fn from(s: &str) -> Self {
        BandId::new(s)
    }
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::Invariant(format!("raster size {width}x{height} overflows")))?;
    if expected != len {
        return Err(Error::Invariant(format!(
            "{width}x{height} raster needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}

/// Single-channel `f32` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Field {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_len(width, height, values.len())?;
        Ok(Field {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Field {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Field {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.values[y * self.width + x] = value;
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Field {
        Field {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `(min, max)` over all values, `None` for an empty field.
    pub fn min_max(&self) -> Option<(f32, f32)> {
        let mut it = self.values.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Bit-level equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Field) -> bool {
        self.shape() == other.shape()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Per-pixel `u8` labels: 0 is background, `1..=255` identify plume sources.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        check_len(width, height, labels.len())?;
        Ok(Mask {
            width,
            height,
            labels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    /// Number of nonzero pixels.
    pub fn count_foreground(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn has_foreground(&self) -> bool {
        self.labels.iter().any(|&l| l != 0)
    }

    pub fn contains_label(&self, label: u8) -> bool {
        self.labels.contains(&label)
    }

    /// Nonzero labels collapsed to 1.
    pub fn binarized(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&l| u8::from(l != 0)).collect(),
        }
    }

    /// Labels as a float field, e.g. for thresholding or grayscale export.
    pub fn to_field(&self) -> Field {
        Field {
            width: self.width,
            height: self.height,
            values: self.labels.iter().map(|&l| f32::from(l)).collect(),
        }
    }
}

/// Multiband radiance scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    pixel_size_m: f64,
    bands: BTreeMap<BandId, Field>,
    meta: serde_json::Map<String, serde_json::Value>,
}

impl Scene {
    pub fn new(width: usize, height: usize, pixel_size_m: f64) -> Self {
        Scene {
            width,
            height,
            pixel_size_m,
            bands: BTreeMap::new(),
            meta: serde_json::Map::new(),
        }
    }

    /// Adds or replaces a band. Fails if the field shape differs from the scene.
    pub fn with_band(mut self, id: impl Into<BandId>, field: Field) -> Result<Self> {
        self.insert_band(id.into(), field)?;
        Ok(self)
    }

    pub fn insert_band(&mut self, id: BandId, field: Field) -> Result<()> {
        ensure_same_shape(self.shape(), field.shape())?;
        self.bands.insert(id, field);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_size_m(&self) -> f64 {
        self.pixel_size_m
    }

    pub fn bands(&self) -> &BTreeMap<BandId, Field> {
        &self.bands
    }

    pub fn band(&self, id: &BandId) -> Result<&Field> {
        self.bands
            .get(id)
            .ok_or_else(|| Error::MissingBand(id.to_string()))
    }

    pub fn band_mut(&mut self, id: &BandId) -> Result<&mut Field> {
        self.bands
            .get_mut(id)
            .ok_or_else(|| Error::MissingBand(id.to_string()))
    }

    pub fn meta(&self) -> &serde_json::Map<String, serde_json::Value> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut serde_json::Map<String, serde_json::Value> {
        &mut self.meta
    }

    /// Checks the scene invariants: finite, non-negative radiances and a
    /// positive pixel size.
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size_m.is_finite() && self.pixel_size_m > 0.0) {
            return Err(Error::Invariant(format!(
                "pixel size must be positive, got {}",
                self.pixel_size_m
            )));
        }
        for (id, field) in &self.bands {
            ensure_same_shape(self.shape(), field.shape())?;
            if let Some(v) = field.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Invariant(format!(
                    "band {id} holds invalid radiance {v}"
                )));
            }
        }
        Ok(())
    }

    /// Both SWIR bands needed by the ratio workflows.
    pub fn swir(&self) -> Result<(&Field, &Field)> {
        Ok((self.band(&BandId::b11())?, self.band(&BandId::b12())?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_rejects_wrong_length() {
        assert!(Field::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Mask::new(3, 1, vec![0; 3]).is_ok());
    }

    #[test]
    fn scene_rejects_mismatched_band() {
        let scene = Scene::new(2, 2, DEFAULT_PIXEL_SIZE_M);
        let err = scene.with_band("B11", Field::filled(3, 2, 1.0)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn scene_validation_flags_negative_radiance() {
        let scene = Scene::new(1, 1, DEFAULT_PIXEL_SIZE_M)
            .with_band("B11", Field::filled(1, 1, -1.0))
            .unwrap();
        assert!(matches!(scene.validate(), Err(Error::Invariant(_))));
    }

    #[test]
    fn missing_band_is_reported_by_name() {
        let scene = Scene::new(1, 1, DEFAULT_PIXEL_SIZE_M);
        let err = scene.band(&BandId::new("B08")).unwrap_err();
        assert_eq!(err.to_string(), "missing band B08");
    }
}
