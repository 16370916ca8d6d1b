use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Field, Mask};
use crate::evalmetrics::DiffCode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    /// Linear `[min, max] -> [0, 255]`; constant inputs map to mid-gray.
    Grayscale,
    /// TN black, TP green, FP red, FN yellow.
    Diffmap,
}

impl std::str::FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" => Ok(Colormap::Grayscale),
            "diffmap" => Ok(Colormap::Diffmap),
            other => Err(Error::InvalidArgument(format!("unknown colormap {other:?}"))),
        }
    }
}

/// Raster accepted by [`render_rgb`] / [`export_image`].
#[derive(Debug, Clone, Copy)]
pub enum ImageSource<'a> {
    Field(&'a Field),
    Mask(&'a Mask),
}

impl<'a> From<&'a Field> for ImageSource<'a> {
    fn from(f: &'a Field) -> Self {
        ImageSource::Field(f)
    }
}

impl<'a> From<&'a Mask> for ImageSource<'a> {
    fn from(m: &'a Mask) -> Self {
        ImageSource::Mask(m)
    }
}

fn grayscale(values: impl Iterator<Item = f64> + Clone) -> Vec<u8> {
    let (lo, hi) = values
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values
        .flat_map(|v| {
            let g = if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                128
            };
            [g, g, g]
        })
        .collect()
}

/// Renders to packed 8-bit RGB triples in raster order.
pub fn render_rgb<'a>(source: impl Into<ImageSource<'a>>, colormap: Colormap) -> Result<Vec<u8>> {
    match (source.into(), colormap) {
        (ImageSource::Field(f), Colormap::Grayscale) => {
            Ok(grayscale(f.values().iter().map(|&v| f64::from(v))))
        }
        (ImageSource::Mask(m), Colormap::Grayscale) => {
            Ok(grayscale(m.labels().iter().map(|&v| f64::from(v))))
        }
        (ImageSource::Mask(m), Colormap::Diffmap) => {
            let mut out = Vec::with_capacity(m.len() * 3);
            for &code in m.labels() {
                let code = DiffCode::from_u8(code).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "diffmap colormap needs a difference-code mask (0..=3), found {code}"
                    ))
                })?;
                out.extend_from_slice(&code.rgb());
            }
            Ok(out)
        }
        (ImageSource::Field(_), Colormap::Diffmap) => Err(Error::InvalidArgument(
            "diffmap colormap needs a difference-code mask, not a float field".into(),
        )),
    }
}

/// Writes a binary PPM (P6, maxval 255).
pub fn export_image<'a>(
    source: impl Into<ImageSource<'a>>,
    path: impl AsRef<Path>,
    colormap: Colormap,
) -> Result<()> {
    let source = source.into();
    let (w, h) = match source {
        ImageSource::Field(f) => f.shape(),
        ImageSource::Mask(m) => m.shape(),
    };
    let rgb = render_rgb(source, colormap)?;
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(&rgb);
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
