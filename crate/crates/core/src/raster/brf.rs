//! BRF ("band raster file"): one UTF-8 JSON header line terminated by `\n`,
//! followed by a band-sequential, row-major, little-endian payload.
//!
//! ```text
//! {"magic":"BRF1","kind":"scene","dtype":"f32","width":2,"height":2,"bands":["B11","B12"],"pixel_size_m":20.0,"meta":{}}\n
//! <2 * 2 * 2 * 4 bytes>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BandId, Field, Mask, Scene};
use crate::enhance::{ChannelStats, FeatureStack};
use crate::{Error, Result};

const MAGIC: &str = "BRF1";
const STACK_CHANNELS: [&str; 3] = ["V", "S", "V"];

/// Anything that can be stored in a BRF file.
#[derive(Debug, Clone, PartialEq)]
pub enum BrfObject {
    Scene(Scene),
    Field(Field),
    Mask(Mask),
    Stack(FeatureStack),
}

impl BrfObject {
    pub fn kind(&self) -> &'static str {
        match self {
            BrfObject::Scene(_) => "scene",
            BrfObject::Field(_) => "field",
            BrfObject::Mask(_) => "mask",
            BrfObject::Stack(_) => "stack",
        }
    }

    pub fn into_scene(self) -> Result<Scene> {
        match self {
            BrfObject::Scene(s) => Ok(s),
            other => Err(kind_error("scene", &other)),
        }
    }

    pub fn into_field(self) -> Result<Field> {
        match self {
            BrfObject::Field(f) => Ok(f),
            other => Err(kind_error("field", &other)),
        }
    }

    pub fn into_mask(self) -> Result<Mask> {
        match self {
            BrfObject::Mask(m) => Ok(m),
            other => Err(kind_error("mask", &other)),
        }
    }

    pub fn into_stack(self) -> Result<FeatureStack> {
        match self {
            BrfObject::Stack(s) => Ok(s),
            other => Err(kind_error("stack", &other)),
        }
    }

    /// Serializes to the exact on-disk byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = self.header();
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        match self {
            BrfObject::Scene(scene) => {
                for field in scene.bands().values() {
                    push_f32(&mut out, field.values());
                }
            }
            BrfObject::Field(field) => push_f32(&mut out, field.values()),
            BrfObject::Mask(mask) => out.extend_from_slice(mask.labels()),
            BrfObject::Stack(stack) => {
                for channel in stack.channels() {
                    push_f32(&mut out, channel.values());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::MalformedHeader("no header terminator".into()))?;
        let header_text = std::str::from_utf8(&bytes[..newline])
            .map_err(|e| Error::MalformedHeader(format!("header is not UTF-8: {e}")))?;
        let header: Header = serde_json::from_str(header_text)
            .map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let payload = &bytes[newline + 1..];
        header.decode(payload)
    }

    fn validate(&self) -> Result<()> {
        match self {
            BrfObject::Scene(scene) => scene.validate(),
            BrfObject::Field(field) => ensure_finite(field, "field"),
            BrfObject::Mask(_) => Ok(()),
            BrfObject::Stack(stack) => {
                for (i, channel) in stack.channels().iter().enumerate() {
                    ensure_finite(channel, &format!("stack channel {i}"))?;
                }
                Ok(())
            }
        }
    }

    fn header(&self) -> Header {
        let (width, height) = match self {
            BrfObject::Scene(s) => s.shape(),
            BrfObject::Field(f) => f.shape(),
            BrfObject::Mask(m) => m.shape(),
            BrfObject::Stack(s) => s.shape(),
        };
        let mut header = Header {
            magic: MAGIC.to_string(),
            kind: self.kind().to_string(),
            dtype: if matches!(self, BrfObject::Mask(_)) { "u8" } else { "f32" }.to_string(),
            width,
            height,
            bands: None,
            pixel_size_m: None,
            meta: serde_json::Map::new(),
        };
        match self {
            BrfObject::Scene(scene) => {
                header.bands = Some(scene.bands().keys().map(|b| b.to_string()).collect());
                header.pixel_size_m = Some(scene.pixel_size_m());
                header.meta = scene.meta().clone();
            }
            BrfObject::Stack(stack) => {
                header.bands = Some(STACK_CHANNELS.iter().map(|s| s.to_string()).collect());
                header.meta.insert(
                    "normalization".into(),
                    serde_json::to_value(stack.normalization())
                        .expect("channel stats serialize"),
                );
            }
            BrfObject::Field(_) | BrfObject::Mask(_) => {}
        }
        header
    }
}

fn kind_error(expected: &str, found: &BrfObject) -> Error {
    Error::InvalidArgument(format!(
        "expected a BRF {expected}, found a {}",
        found.kind()
    ))
}

fn ensure_finite(field: &Field, what: &str) -> Result<()> {
    match field.values().iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Invariant(format!("{what} contains non-finite value {v}"))),
        None => Ok(()),
    }
}

fn push_f32(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    kind: String,
    dtype: String,
    width: usize,
    height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bands: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pixel_size_m: Option<f64>,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
}

impl Header {
    fn decode(self, payload: &[u8]) -> Result<BrfObject> {
        if self.magic != MAGIC {
            return Err(Error::MalformedHeader(format!("bad magic {:?}", self.magic)));
        }
        let dtype_size = match self.dtype.as_str() {
            "f32" => 4,
            "u8" => 1,
            other => return Err(Error::UnknownDtype(other.to_string())),
        };
        let expected_dtype = if self.kind == "mask" { "u8" } else { "f32" };
        if !matches!(self.kind.as_str(), "scene" | "field" | "mask" | "stack") {
            return Err(Error::MalformedHeader(format!("unknown kind {:?}", self.kind)));
        }
        if self.dtype != expected_dtype {
            return Err(Error::MalformedHeader(format!(
                "kind {} requires dtype {expected_dtype}, header says {}",
                self.kind, self.dtype
            )));
        }
        let n_bands = match self.kind.as_str() {
            "scene" => self
                .bands
                .as_ref()
                .ok_or_else(|| Error::MalformedHeader("scene header lacks bands".into()))?
                .len(),
            "stack" => STACK_CHANNELS.len(),
            _ => 1,
        };
        let expected = self
            .width
            .checked_mul(self.height)
            .and_then(|n| n.checked_mul(n_bands))
            .and_then(|n| n.checked_mul(dtype_size))
            .ok_or_else(|| Error::MalformedHeader("raster dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                actual: payload.len(),
            });
        }
        let plane = self.width * self.height;
        let (w, h) = (self.width, self.height);
        match self.kind.as_str() {
            "mask" => Ok(BrfObject::Mask(Mask::new(w, h, payload.to_vec())?)),
            "field" => Ok(BrfObject::Field(Field::new(w, h, read_f32(payload))?)),
            "stack" => {
                let channels: Vec<Field> = payload
                    .chunks(plane * 4)
                    .map(|chunk| Field::new(w, h, read_f32(chunk)))
                    .collect::<Result<_>>()?;
                let normalization: Option<[ChannelStats; 3]> = match self.meta.get("normalization") {
                    None => None,
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|e| Error::MalformedHeader(format!("normalization: {e}")))?,
                };
                let [v, s, v2]: [Field; 3] = channels
                    .try_into()
                    .map_err(|_| Error::MalformedHeader("stack needs 3 channels".into()))?;
                Ok(BrfObject::Stack(FeatureStack::from_parts([v, s, v2], normalization)?))
            }
            _ => {
                let bands = self.bands.unwrap_or_default();
                let mut scene = Scene::new(w, h, self.pixel_size_m.unwrap_or(super::DEFAULT_PIXEL_SIZE_M));
                for (i, name) in bands.iter().enumerate() {
                    let id = BandId::new(name.clone());
                    if scene.bands().contains_key(&id) {
                        return Err(Error::MalformedHeader(format!("duplicate band {name}")));
                    }
                    let chunk = &payload[i * plane * 4..(i + 1) * plane * 4];
                    scene.insert_band(id, Field::new(w, h, read_f32(chunk))?)?;
                }
                *scene.meta_mut() = self.meta;
                scene.validate()?;
                Ok(BrfObject::Scene(scene))
            }
        }
    }
}

fn read_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes `object` to `path`, refusing objects that violate their invariants.
pub fn write_brf(object: &BrfObject, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = object.to_bytes()?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_brf(path: impl AsRef<Path>) -> Result<BrfObject> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    BrfObject::from_bytes(&bytes)
}
