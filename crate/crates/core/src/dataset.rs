//! Training-set construction: augmentation, tiling, splitting and the
//! dataset manifest.
//!
//! Every sample carries a [`Provenance`] record (scene, tile origin,
//! augmentation chain, seed) that is enough to rebuild it bit-exactly from
//! the normalized scene stack.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enhance::{self, EnhanceConfig, FeatureStack};
use crate::raster::{read_brf, write_brf, BrfObject, Field, Mask};
use crate::synth::{self, SceneConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugOp {
    Hflip,
    Vflip,
    Rot90,
    Rot180,
    Rot270,
    Brightness(f64),
    Contrast(f64),
}

impl AugOp {
    pub fn is_geometric(self) -> bool {
        !matches!(self, AugOp::Brightness(_) | AugOp::Contrast(_))
    }
}

/// Row-major buffer transformed by a geometric op. Rotations are clockwise
/// on screen.
fn geometric<T: Copy>(w: usize, h: usize, data: &[T], op: AugOp) -> (usize, usize, Vec<T>) {
    let (ow, oh) = match op {
        AugOp::Rot90 | AugOp::Rot270 => (h, w),
        _ => (w, h),
    };
    let mut out = Vec::with_capacity(data.len());
    for y in 0..oh {
        for x in 0..ow {
            let (sx, sy) = match op {
                AugOp::Hflip => (w - 1 - x, y),
                AugOp::Vflip => (x, h - 1 - y),
                AugOp::Rot90 => (y, h - 1 - x),
                AugOp::Rot180 => (w - 1 - x, h - 1 - y),
                AugOp::Rot270 => (w - 1 - y, x),
                AugOp::Brightness(_) | AugOp::Contrast(_) => (x, y),
            };
            out.push(data[sy * w + sx]);
        }
    }
    (ow, oh, out)
}

fn photometric(field: &Field, op: AugOp) -> Field {
    match op {
        AugOp::Brightness(f) => field.map(|x| (f64::from(x) * f) as f32),
        AugOp::Contrast(f) => {
            let mean = field.values().iter().map(|&v| f64::from(v)).sum::<f64>() / field.len() as f64;
            field.map(|x| (mean + (f64::from(x) - mean) * f) as f32)
        }
        _ => field.clone(),
    }
}

/// Applies one op to a stack/mask pair. Geometric ops move stack and mask
/// together; photometric ops touch only the stack.
pub fn augment_pair(stack: &FeatureStack, mask: &Mask, op: AugOp) -> Result<(FeatureStack, Mask)> {
    if let AugOp::Brightness(f) | AugOp::Contrast(f) = op {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidArgument(format!("augmentation factor must be > 0, got {f}")));
        }
    }
    crate::raster::ensure_same_shape(stack.shape(), mask.shape())?;
    let normalization = stack.normalization().copied();
    if op.is_geometric() {
        let channels = stack.channels().clone().map(|c| {
            let (w, h, v) = geometric(c.width(), c.height(), c.values(), op);
            Field::new(w, h, v).expect("geometric op preserves length")
        });
        let (w, h, labels) = geometric(mask.width(), mask.height(), mask.labels(), op);
        Ok((FeatureStack::from_parts(channels, normalization)?, Mask::new(w, h, labels)?))
    } else {
        let channels = stack.channels().clone().map(|c| photometric(&c, op));
        Ok((FeatureStack::from_parts(channels, normalization)?, mask.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene_id: String,
    /// Top-left corner `(x, y)` of the tile in the scene.
    pub origin: (usize, usize),
    pub tile_px: usize,
    pub augmentations: Vec<AugOp>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub stack: FeatureStack,
    pub mask: Mask,
    pub provenance: Provenance,
}

/// Appends `op` to the sample's augmentation chain.
pub fn augment(sample: &Sample, op: AugOp) -> Result<Sample> {
    let (stack, mask) = augment_pair(&sample.stack, &sample.mask, op)?;
    let mut provenance = sample.provenance.clone();
    provenance.augmentations.push(op);
    Ok(Sample {
        id: sample.id.clone(),
        stack,
        mask,
        provenance,
    })
}

/// Tile origins along one axis: multiples of `stride` while the tile fits,
/// plus a final edge-aligned origin if that leaves pixels uncovered.
pub fn tile_origins(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut origins: Vec<usize> = (0..).map(|k| k * stride).take_while(|o| o + tile <= len).collect();
    if origins.last().is_some_and(|&o| o + tile < len) {
        origins.push(len - tile);
    }
    origins
}

fn crop_field(f: &Field, x0: usize, y0: usize, size: usize) -> Field {
    Field::from_fn(size, size, |x, y| f.get(x0 + x, y0 + y))
}

fn crop_mask(m: &Mask, x0: usize, y0: usize, size: usize) -> Mask {
    Mask::from_fn(size, size, |x, y| m.get(x0 + x, y0 + y))
}

fn crop(stack: &FeatureStack, mask: &Mask, origin: (usize, usize), size: usize) -> Result<(FeatureStack, Mask)> {
    let channels = stack.channels().clone().map(|c| crop_field(&c, origin.0, origin.1, size));
    Ok((
        FeatureStack::from_parts(channels, stack.normalization().copied())?,
        crop_mask(mask, origin.0, origin.1, size),
    ))
}

/// Square tiles in raster order of their origins.
pub fn tile(
    scene_id: &str,
    stack: &FeatureStack,
    mask: &Mask,
    tile_px: usize,
    stride_px: usize,
) -> Result<Vec<Sample>> {
    crate::raster::ensure_same_shape(stack.shape(), mask.shape())?;
    let (w, h) = stack.shape();
    if tile_px == 0 || stride_px == 0 {
        return Err(Error::InvalidArgument("tile and stride must be >= 1".into()));
    }
    if tile_px > w.min(h) {
        return Err(Error::InvalidArgument(format!(
            "tile of {tile_px} px does not fit a {w}x{h} scene"
        )));
    }
    let xs = tile_origins(w, tile_px, stride_px);
    let ys = tile_origins(h, tile_px, stride_px);
    let mut samples = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let (s, m) = crop(stack, mask, (x, y), tile_px)?;
            samples.push(Sample {
                id: format!("{scene_id}_x{x}_y{y}"),
                stack: s,
                mask: m,
                provenance: Provenance {
                    scene_id: scene_id.to_string(),
                    origin: (x, y),
                    tile_px,
                    augmentations: Vec::new(),
                    seed: 0,
                },
            });
        }
    }
    Ok(samples)
}

/// Rebuilds a sample from the scene-level stack/mask and its provenance.
pub fn regenerate(stack: &FeatureStack, mask: &Mask, provenance: &Provenance) -> Result<(FeatureStack, Mask)> {
    let (w, h) = stack.shape();
    let (x, y) = provenance.origin;
    if x + provenance.tile_px > w || y + provenance.tile_px > h {
        return Err(Error::InvalidArgument("provenance tile lies outside the scene".into()));
    }
    let (mut s, mut m) = crop(stack, mask, provenance.origin, provenance.tile_px)?;
    for &op in &provenance.augmentations {
        (s, m) = augment_pair(&s, &m, op)?;
    }
    Ok((s, m))
}

/// Random chain: one geometric op (possibly none) followed by brightness and
/// contrast factors drawn from `[0.9, 1.1]`.
pub fn random_chain(seed: u64) -> Vec<AugOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = [None, Some(AugOp::Hflip), Some(AugOp::Vflip), Some(AugOp::Rot90), Some(AugOp::Rot180), Some(AugOp::Rot270)];
    let mut chain: Vec<AugOp> = geo[rng.random_range(0..geo.len())].into_iter().collect();
    chain.push(AugOp::Brightness(rng.random_range(0.9..=1.1)));
    chain.push(AugOp::Contrast(rng.random_range(0.9..=1.1)));
    chain
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Seeded shuffle.
    Random,
    /// Keeps input order; the last groups become validation.
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub val_fraction: f64,
    pub stratify: bool,
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            val_fraction: 0.2,
            stratify: true,
            mode: SplitMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub split: Split,
    /// Paths relative to the manifest's directory.
    pub stack_path: PathBuf,
    pub mask_path: PathBuf,
    pub has_plume: bool,
    pub provenance: Provenance,
}

impl SampleRecord {
    /// Augmented variants of one tile share a group and never straddle splits.
    fn group_key(&self) -> (&str, (usize, usize)) {
        (&self.provenance.scene_id, self.provenance.origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub config_hash: String,
    pub global_seed: u64,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Paths (relative to `root`) that do not exist.
    pub fn missing_files(&self, root: &Path) -> Vec<PathBuf> {
        self.samples
            .iter()
            .flat_map(|s| [&s.stack_path, &s.mask_path])
            .filter(|p| !root.join(p).is_file())
            .cloned()
            .collect()
    }
}

/// Assigns train/val splits. Records sharing a tile (augmented variants) are
/// assigned as one group. With `stratify`, plume and plume-free groups are
/// split separately so each side keeps the global plume fraction to within
/// one group.
pub fn split_manifest(
    dataset_id: &str,
    mut records: Vec<SampleRecord>,
    cfg: &SplitConfig,
    seed: u64,
    config_hash: &str,
) -> Result<Manifest> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples to split".into()));
    }
    if !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction must lie in (0, 1), got {}",
            cfg.val_fraction
        )));
    }
    let mut groups: Vec<(bool, Vec<usize>)> = Vec::new();
    let mut keys: Vec<(String, (usize, usize))> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let (scene, origin) = r.group_key();
        match keys.iter().position(|(s, o)| s == scene && *o == origin) {
            Some(g) => {
                groups[g].0 |= r.has_plume;
                groups[g].1.push(i);
            }
            None => {
                keys.push((scene.to_string(), origin));
                groups.push((r.has_plume, vec![i]));
            }
        }
    }
    let strata: Vec<Vec<usize>> = if cfg.stratify {
        let (plume, clean): (Vec<usize>, Vec<usize>) = (0..groups.len()).partition(|&g| groups[g].0);
        vec![plume, clean]
    } else {
        vec![(0..groups.len()).collect()]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val_groups = Vec::new();
    for mut stratum in strata {
        let n_val = (stratum.len() as f64 * cfg.val_fraction).round() as usize;
        match cfg.mode {
            SplitMode::Random => {
                stratum.shuffle(&mut rng);
                val_groups.extend_from_slice(&stratum[..n_val]);
            }
            SplitMode::Temporal => val_groups.extend_from_slice(&stratum[stratum.len() - n_val..]),
        }
    }
    if val_groups.is_empty() || val_groups.len() == groups.len() {
        return Err(Error::InvalidArgument(format!(
            "val_fraction {} leaves an empty split for {} groups",
            cfg.val_fraction,
            groups.len()
        )));
    }
    for r in records.iter_mut() {
        r.split = Split::Train;
    }
    for g in val_groups {
        for &i in &groups[g].1 {
            records[i].split = Split::Val;
        }
    }
    Ok(Manifest {
        dataset_id: dataset_id.to_string(),
        config_hash: config_hash.to_string(),
        global_seed: seed,
        samples: records,
    })
}

/// Where a dataset scene comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum SceneSource {
    /// Generated on the fly from a synthetic scene config.
    Synth { id: String, config: SceneConfig },
    /// Existing BRF scene and ground-truth mask (paths relative to the
    /// dataset config file).
    Files { id: String, scene: PathBuf, mask: PathBuf },
}

impl SceneSource {
    pub fn id(&self) -> &str {
        match self {
            SceneSource::Synth { id, .. } | SceneSource::Files { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub dataset_id: String,
    pub seed: u64,
    pub scenes: Vec<SceneSource>,
    pub enhance: EnhanceConfig,
    pub tile_px: usize,
    pub stride_px: usize,
    /// Explicit augmentation chains; each adds one variant per tile.
    pub augmentations: Vec<Vec<AugOp>>,
    /// Extra seeded random chains per tile (see [`random_chain`]).
    pub random_augmentations: usize,
    pub split: SplitConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            dataset_id: "dataset".into(),
            seed: 0,
            scenes: Vec::new(),
            enhance: EnhanceConfig::default(),
            tile_px: 32,
            stride_px: 32,
            augmentations: Vec::new(),
            random_augmentations: 0,
            split: SplitConfig::default(),
        }
    }
}

impl DatasetConfig {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Loads or generates a scene, then returns its normalized stack and
/// ground-truth mask.
pub fn prepare_scene(source: &SceneSource, enhance_cfg: &EnhanceConfig, base_dir: &Path) -> Result<(FeatureStack, Mask)> {
    let (scene, mask) = match source {
        SceneSource::Synth { config, .. } => {
            let g = synth::generate_scene(config)?;
            (g.scene, g.mask)
        }
        SceneSource::Files { scene, mask, .. } => (
            read_brf(base_dir.join(scene))?.into_scene()?,
            read_brf(base_dir.join(mask))?.into_mask()?,
        ),
    };
    crate::raster::ensure_same_shape(scene.shape(), mask.shape())?;
    let enhanced = enhance::enhance_scene(&scene, enhance_cfg)?;
    Ok((enhanced.stack, mask))
}

fn scene_samples(cfg: &DatasetConfig, scene_index: usize, base_dir: &Path) -> Result<Vec<Sample>> {
    let source = &cfg.scenes[scene_index];
    let (stack, mask) = prepare_scene(source, &cfg.enhance, base_dir)?;
    let tiles = tile(source.id(), &stack, &mask, cfg.tile_px, cfg.stride_px)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (scene_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = Vec::new();
    for base in tiles {
        let mut variant = 0usize;
        let mut push = |chain: &[AugOp], seed: u64, out: &mut Vec<Sample>| -> Result<()> {
            let mut s = base.clone();
            for &op in chain {
                s = augment(&s, op)?;
            }
            s.provenance.seed = seed;
            if variant > 0 {
                s.id = format!("{}_a{variant}", base.id);
            }
            variant += 1;
            out.push(s);
            Ok(())
        };
        push(&[], 0, &mut out)?;
        for chain in &cfg.augmentations {
            push(chain, 0, &mut out)?;
        }
        for _ in 0..cfg.random_augmentations {
            let seed: u64 = rng.random();
            push(&random_chain(seed), seed, &mut out)?;
        }
    }
    Ok(out)
}

/// Builds the dataset under `out_dir/<dataset_id>/` and writes
/// `manifest.json` there. Relative scene paths resolve against `base_dir`.
pub fn build_dataset(cfg: &DatasetConfig, base_dir: &Path, out_dir: &Path) -> Result<Manifest> {
    if cfg.scenes.is_empty() {
        return Err(Error::InvalidArgument("dataset config lists no scenes".into()));
    }
    for (i, s) in cfg.scenes.iter().enumerate() {
        if s.id().is_empty() || s.id().contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("invalid scene id {:?}", s.id())));
        }
        if cfg.scenes[..i].iter().any(|o| o.id() == s.id()) {
            return Err(Error::InvalidArgument(format!("duplicate scene id {}", s.id())));
        }
    }
    let root = out_dir.join(&cfg.dataset_id);

    #[cfg(feature = "parallel")]
    let per_scene: Vec<Result<Vec<Sample>>> = {
        use rayon::prelude::*;
        (0..cfg.scenes.len())
            .into_par_iter()
            .map(|i| scene_samples(cfg, i, base_dir))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_scene: Vec<Result<Vec<Sample>>> = (0..cfg.scenes.len())
        .map(|i| scene_samples(cfg, i, base_dir))
        .collect();

    let mut records = Vec::new();
    for samples in per_scene {
        for s in samples? {
            let rel = PathBuf::from("samples").join(&s.id);
            let dir = root.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_brf(&BrfObject::Stack(s.stack.clone()), dir.join("stack.brf"))?;
            write_brf(&BrfObject::Mask(s.mask.clone()), dir.join("mask.brf"))?;
            records.push(SampleRecord {
                id: s.id.clone(),
                split: Split::Train,
                stack_path: rel.join("stack.brf"),
                mask_path: rel.join("mask.brf"),
                has_plume: s.mask.has_foreground(),
                provenance: s.provenance,
            });
        }
    }
    let manifest = split_manifest(&cfg.dataset_id, records, &cfg.split, cfg.seed, &cfg.hash())?;
    manifest.save(root.join("manifest.json"))?;
    Ok(manifest)
}
