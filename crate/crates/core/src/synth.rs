//! Synthetic scenes: methane-free backgrounds with a known band 12
//! relation, sensor-like noise, and plumes with exact ground truth.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64`. Draws happen in a
//! fixed order (bands in config order, pixels row-major, artifacts in draw
//! order), so a config and seed fully determine the output bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::enhance::{predict_r12, RegressionModel};
use crate::raster::{BandId, Field, Mask, Scene, DEFAULT_PIXEL_SIZE_M};
use crate::{stats, Error, Result};

/// Marks background pixels: value inside `[Q(p_lo), Q(p_hi)]` where `Q` is
/// the nearest-rank percentile. Everything else is treated as
/// methane-suspect and gets 0.
pub fn background_mask_percentile(ratio_map: &Field, p_lo: f64, p_hi: f64) -> Result<Mask> {
    if !(0.0 <= p_lo && p_lo < p_hi && p_hi <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentiles must satisfy 0 <= p_lo < p_hi <= 100, got ({p_lo}, {p_hi})"
        )));
    }
    if ratio_map.is_empty() {
        return Err(Error::InvalidArgument("empty field".into()));
    }
    let mut sorted = ratio_map.values().to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    let lo = sorted[stats::nearest_rank(p_lo, n) - 1];
    let hi = sorted[stats::nearest_rank(p_hi, n) - 1];
    Ok(Mask::from_fn(ratio_map.width(), ratio_map.height(), |x, y| {
        let v = ratio_map.get(x, y);
        u8::from(v >= lo && v <= hi)
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanB12 {
    pub field: Field,
    /// Set when the model ignores every predictor, so the simulated band is
    /// a constant fill instead of following the scene's texture.
    pub variability_loss: bool,
}

/// Methane-free band 12 predicted from the scene's other bands.
pub fn simulate_clean_b12(scene: &Scene, model: &RegressionModel) -> Result<CleanB12> {
    let field = predict_r12(model, scene)?;
    let variability_loss = model.is_intercept_only();
    if variability_loss {
        log::warn!("background model has no predictor weight; simulated B12 is constant");
    }
    Ok(CleanB12 {
        field,
        variability_loss,
    })
}

/// Adds i.i.d. `N(0, sigma^2)` noise (one draw per pixel, row-major) and
/// clamps the result at 0.
pub fn add_gaussian_noise(field: &Field, sigma: f64, seed: u64) -> Result<Field> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(field.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(field.map(|v| {
        let z: f64 = rng.sample(StandardNormal);
        (f64::from(v) + sigma * z).max(0.0) as f32
    }))
}

/// Sensor noise model for generated scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub gaussian_sigma: f64,
    pub artifact_count: usize,
    pub artifact_radius_px: f64,
    pub artifact_amplitude: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            gaussian_sigma: 0.0,
            artifact_count: 0,
            artifact_radius_px: 2.0,
            artifact_amplitude: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.gaussian_sigma, self.artifact_radius_px, self.artifact_amplitude]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.gaussian_sigma < 0.0 || self.artifact_radius_px <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid noise spec {self:?}")));
        }
        Ok(())
    }
}

/// Bump centers drawn for `spec`, in draw order.
fn artifact_centers(width: usize, height: usize, spec: &NoiseSpec) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.artifact_count)
        .map(|_| (rng.random_range(0..width), rng.random_range(0..height)))
        .collect()
}

/// Places `artifact_count` Gaussian bumps of alternating sign (even draws
/// positive) at uniformly drawn pixel centers. The returned mask marks
/// pixels where some bump exceeds 5% of the amplitude.
pub fn add_cluster_artifacts(field: &Field, spec: &NoiseSpec) -> Result<(Field, Mask)> {
    spec.validate()?;
    let (w, h) = field.shape();
    let mut footprint = Mask::zeros(w, h);
    if spec.artifact_count == 0 || field.is_empty() {
        return Ok((field.clone(), footprint));
    }
    let mut acc: Vec<f64> = field.values().iter().map(|&v| f64::from(v)).collect();
    let r = spec.artifact_radius_px;
    let reach = (6.0 * r).ceil() as isize;
    for (i, &(cx, cy)) in artifact_centers(w, h, spec).iter().enumerate() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let amp = sign * spec.artifact_amplitude;
        let (cx, cy) = (cx as isize, cy as isize);
        for y in (cy - reach).max(0)..=(cy + reach).min(h as isize - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(w as isize - 1) {
                let d2 = ((x - cx).pow(2) + (y - cy).pow(2)) as f64;
                let bump = amp * (-d2 / (2.0 * r * r)).exp();
                let idx = y as usize * w + x as usize;
                acc[idx] += bump;
                if bump.abs() > 0.05 * spec.artifact_amplitude.abs() {
                    footprint.labels_mut()[idx] = 1;
                }
            }
        }
    }
    let values = acc.into_iter().map(|v| v.max(0.0) as f32).collect();
    Ok((Field::new(w, h, values)?, footprint))
}

/// Gaussian plume with Beer-Lambert-style attenuation of band 12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlumeSpec {
    pub center_xy: (f64, f64),
    pub sigma_px: f64,
    /// Peak of the dimensionless enhancement field `E`. Zero injects nothing.
    pub peak_enhancement: f64,
    pub absorption_kappa: f64,
    /// Ground truth covers `E >= label_threshold * peak_enhancement`.
    pub label_threshold: f64,
    pub source_id: u8,
}

impl PlumeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.center_xy.0.is_finite()
            && self.center_xy.1.is_finite()
            && self.sigma_px.is_finite()
            && self.sigma_px > 0.0
            && self.peak_enhancement.is_finite()
            && self.peak_enhancement >= 0.0
            && self.absorption_kappa.is_finite()
            && self.absorption_kappa > 0.0
            && self.label_threshold > 0.0
            && self.label_threshold < 1.0
            && self.source_id != 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid plume spec {self:?}")))
        }
    }

    /// Enhancement at pixel `(x, y)`.
    pub fn enhancement(&self, x: usize, y: usize) -> f64 {
        let dx = x as f64 - self.center_xy.0;
        let dy = y as f64 - self.center_xy.1;
        self.peak_enhancement * (-(dx * dx + dy * dy) / (2.0 * self.sigma_px * self.sigma_px)).exp()
    }

    /// Radius of the labelled footprint.
    pub fn footprint_radius(&self) -> f64 {
        self.sigma_px * (2.0 * (1.0 / self.label_threshold).ln()).sqrt()
    }

    fn is_clipped(&self, width: usize, height: usize) -> bool {
        let r = self.footprint_radius();
        let (cx, cy) = self.center_xy;
        cx - r < 0.0 || cy - r < 0.0 || cx + r > width as f64 - 1.0 || cy + r > height as f64 - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlumeInjection {
    pub scene: Scene,
    pub mask: Mask,
    /// The labelled footprint reaches past the scene border.
    pub clipped: bool,
}

/// Injects one plume into a fresh (all-background) ground truth.
pub fn inject_plume(scene: &Scene, spec: &PlumeSpec) -> Result<PlumeInjection> {
    inject_plume_into(scene, &Mask::zeros(scene.width(), scene.height()), spec)
}

/// Injects a plume on top of an existing ground-truth mask. Pixels already
/// labelled keep their original source id.
///
/// Band 12 is multiplied by `exp(-kappa * E)`; every other band is left
/// untouched. Labelled pixels with positive radiance are guaranteed to end
/// up strictly darker even when the attenuation is below `f32` resolution.
pub fn inject_plume_into(scene: &Scene, existing: &Mask, spec: &PlumeSpec) -> Result<PlumeInjection> {
    spec.validate()?;
    crate::raster::ensure_same_shape(scene.shape(), existing.shape())?;
    if existing.contains_label(spec.source_id) {
        return Err(Error::SourceIdCollision(spec.source_id));
    }
    let (w, h) = scene.shape();
    let mut out = scene.clone();
    let mut mask = existing.clone();
    let threshold = spec.label_threshold * spec.peak_enhancement;
    let b12 = out.band_mut(&BandId::b12())?;
    for y in 0..h {
        for x in 0..w {
            let e = spec.enhancement(x, y);
            if e <= 0.0 {
                continue;
            }
            let old = b12.get(x, y);
            let mut new = (f64::from(old) * (-spec.absorption_kappa * e).exp()) as f32;
            let labelled = e >= threshold;
            if labelled {
                if new >= old && old > 0.0 {
                    new = old.next_down();
                }
                if mask.get(x, y) == 0 {
                    mask.set(x, y, spec.source_id);
                }
            }
            b12.set(x, y, new.min(old));
        }
    }
    let clipped = spec.is_clipped(w, h);
    if clipped {
        log::warn!("plume {} footprint extends past the scene border", spec.source_id);
    }
    Ok(PlumeInjection {
        scene: out,
        mask,
        clipped,
    })
}

/// Texture for one non-absorbing band: `base + amplitude * z`, where `z` is
/// Gaussian-smoothed white noise rescaled to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandTexture {
    pub band: BandId,
    pub base_level: f64,
    pub correlation_length_px: f64,
    pub amplitude: f64,
}

/// True methane-free relation `B12 = sum(coefficients * predictors) + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRelation {
    pub predictors: Vec<BandId>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub pixel_size_m: f64,
    pub bands: Vec<BandTexture>,
    pub b12_relation: LinearRelation,
    pub noise: NoiseSpec,
    pub plumes: Vec<PlumeSpec>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 64,
            height: 64,
            pixel_size_m: DEFAULT_PIXEL_SIZE_M,
            bands: vec![BandTexture {
                band: BandId::b11(),
                base_level: 1000.0,
                correlation_length_px: 4.0,
                amplitude: 100.0,
            }],
            b12_relation: LinearRelation {
                predictors: vec![BandId::b11()],
                coefficients: vec![0.85],
                intercept: 40.0,
            },
            noise: NoiseSpec::default(),
            plumes: Vec::new(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidArgument(msg));
        if self.width == 0 || self.height == 0 {
            return invalid("scene must be at least 1x1".into());
        }
        if !(self.pixel_size_m.is_finite() && self.pixel_size_m > 0.0) {
            return invalid(format!("pixel size {} must be positive", self.pixel_size_m));
        }
        let b12 = BandId::b12();
        for (i, t) in self.bands.iter().enumerate() {
            if t.band == b12 {
                return invalid("B12 is derived from b12_relation and cannot have a texture".into());
            }
            if self.bands[..i].iter().any(|o| o.band == t.band) {
                return invalid(format!("band {} listed twice", t.band));
            }
            if ![t.base_level, t.correlation_length_px, t.amplitude].iter().all(|v| v.is_finite())
                || t.correlation_length_px < 0.0
            {
                return invalid(format!("invalid texture for {}", t.band));
            }
        }
        let rel = &self.b12_relation;
        if rel.predictors.len() != rel.coefficients.len() {
            return invalid("b12_relation needs one coefficient per predictor".into());
        }
        for p in &rel.predictors {
            if !self.bands.iter().any(|t| &t.band == p) {
                return invalid(format!("b12_relation predictor {p} has no texture"));
            }
        }
        self.noise.validate()?;
        for p in &self.plumes {
            p.validate()?;
        }
        for (i, p) in self.plumes.iter().enumerate() {
            if self.plumes[..i].iter().any(|o| o.source_id == p.source_id) {
                return Err(Error::SourceIdCollision(p.source_id));
            }
        }
        Ok(())
    }
}

/// Output of [`generate_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    /// Union of all plume footprints, labelled by source id.
    pub mask: Mask,
    /// Footprint of the cluster artifacts.
    pub artifacts: Mask,
    /// Source ids whose footprint was clipped by the scene border.
    pub clipped: Vec<u8>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    if len == 1 {
        return 0;
    }
    let period = 2 * len;
    let mut m = i.rem_euclid(period);
    if m >= len {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with mirror boundaries.
fn smooth(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[y * width + reflect(x as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(y as isize + k as isize - radius, height) * width + x])
                .sum();
        }
    }
    out
}

fn texture(cfg: &BandTexture, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<Field> {
    let white: Vec<f64> = (0..width * height).map(|_| rng.sample(StandardNormal)).collect();
    let smoothed = smooth(&white, width, height, cfg.correlation_length_px);
    let n = smoothed.len() as f64;
    let mean = smoothed.iter().sum::<f64>() / n;
    let std = (smoothed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { cfg.amplitude / std } else { 0.0 };
    let values: Vec<f32> = smoothed
        .iter()
        .map(|v| (cfg.base_level + scale * (v - mean)) as f32)
        .collect();
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "texture for {} goes negative ({v}); raise base_level or lower amplitude",
            cfg.band
        )));
    }
    Field::new(width, height, values)
}

/// Builds a scene from `config`:
///
/// 1. one smoothed texture per configured band (bands in config order);
/// 2. B12 from the exact linear relation;
/// 3. Gaussian noise on every band (textures first, then B12), each band with
///    its own seed drawn from the scene generator;
/// 4. cluster artifacts at shared positions on every band;
/// 5. plumes in list order.
///
/// The artifact seed is a generator draw XOR `noise.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<GeneratedScene> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scene = Scene::new(w, h, config.pixel_size_m);
    for t in &config.bands {
        let field = texture(t, w, h, &mut rng)?;
        scene.insert_band(t.band.clone(), field)?;
    }

    let rel = &config.b12_relation;
    let preds: Vec<&Field> = rel
        .predictors
        .iter()
        .map(|b| scene.band(b))
        .collect::<Result<_>>()?;
    let b12_values: Vec<f32> = (0..w * h)
        .map(|i| {
            let mut acc = rel.intercept;
            for (p, &beta) in preds.iter().zip(&rel.coefficients) {
                acc += beta * f64::from(p.values()[i]);
            }
            acc as f32
        })
        .collect();
    if let Some(v) = b12_values.iter().find(|v| **v <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "b12_relation yields non-positive radiance {v}"
        )));
    }
    scene.insert_band(BandId::b12(), Field::new(w, h, b12_values)?)?;

    let order: Vec<BandId> = config
        .bands
        .iter()
        .map(|t| t.band.clone())
        .chain(std::iter::once(BandId::b12()))
        .collect();
    for id in &order {
        let seed: u64 = rng.random();
        if config.noise.gaussian_sigma > 0.0 {
            let noisy = add_gaussian_noise(scene.band(id)?, config.noise.gaussian_sigma, seed)?;
            *scene.band_mut(id)? = noisy;
        }
    }

    let artifact_spec = NoiseSpec {
        seed: rng.random::<u64>() ^ config.noise.seed,
        ..config.noise.clone()
    };
    let mut artifacts = Mask::zeros(w, h);
    if artifact_spec.artifact_count > 0 {
        for id in &order {
            let (field, footprint) = add_cluster_artifacts(scene.band(id)?, &artifact_spec)?;
            *scene.band_mut(id)? = field;
            artifacts = footprint;
        }
    }

    let mut mask = Mask::zeros(w, h);
    let mut clipped = Vec::new();
    for plume in &config.plumes {
        let inj = inject_plume_into(&scene, &mask, plume)?;
        if inj.clipped {
            clipped.push(plume.source_id);
        }
        scene = inj.scene;
        mask = inj.mask;
    }
    scene
        .meta_mut()
        .insert("generator".into(), serde_json::json!("plume-core synth"));
    scene
        .meta_mut()
        .insert("seed".into(), serde_json::json!(config.seed));
    Ok(GeneratedScene {
        scene,
        mask,
        artifacts,
        clipped,
    })
}
