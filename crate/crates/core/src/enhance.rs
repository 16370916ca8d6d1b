//! Spectral enhancement: Varon and Sánchez ratios and the `[V, S, V]` stack.
//!
//! Methane absorbs in Sentinel-2 band 12 (~2190 nm) while band 11
//! (~1610 nm) is nearly transparent to it, so plume pixels show up as
//! negative excursions of
//!
//! ```text
//! V(R12, R11) = (c * R12 - R11) / R11
//! ```
//!
//! where `c` calibrates band 12 onto band 11 over background pixels. The
//! Sánchez ratio replaces the reference band with a regression prediction of
//! the methane-free band 12 radiance, `S = V(R12, R12_hat)`, which adapts to
//! surface type and suppresses false positives over dark or spectrally
//! unusual surfaces.

use serde::{Deserialize, Serialize};

use crate::raster::{ensure_same_shape, BandId, Field, Mask, Scene};
use crate::{linalg, stats, synth, Error, Result};

/// Reference radiances at or below this value yield a ratio of 0.
pub const R11_FLOOR: f64 = 1e-6;
/// Lower bound on the standard deviation used by [`zscore`].
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Least-squares calibration factor for the ratio numerator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub c: f64,
    pub n_pixels: usize,
}

fn selected(mask: Option<&Mask>, i: usize) -> bool {
    mask.is_none_or(|m| m.labels()[i] != 0)
}

/// Fits `c = argmin sum (c * absorbing - reference)^2` over the pixels
/// selected by `fit_mask` (all pixels when `None`).
///
/// Sums run in row-major order in `f64`, so the result does not depend on
/// how callers parallelize around it.
pub fn fit_scale_c(absorbing: &Field, reference: &Field, fit_mask: Option<&Mask>) -> Result<ScaleFactor> {
    ensure_same_shape(absorbing.shape(), reference.shape())?;
    if let Some(m) = fit_mask {
        ensure_same_shape(absorbing.shape(), m.shape())?;
    }
    let mut cross = 0.0f64;
    let mut energy = 0.0f64;
    let mut n = 0usize;
    for (i, (&a, &r)) in absorbing.values().iter().zip(reference.values()).enumerate() {
        if selected(fit_mask, i) {
            let (a, r) = (f64::from(a), f64::from(r));
            cross += a * r;
            energy += a * a;
            n += 1;
        }
    }
    if n < 2 {
        return Err(Error::DegenerateFit(format!(
            "scale factor needs at least 2 pixels, mask selects {n}"
        )));
    }
    if energy == 0.0 {
        return Err(Error::DegenerateFit(
            "absorbing band is identically zero over the fit pixels".into(),
        ));
    }
    Ok(ScaleFactor {
        c: cross / energy,
        n_pixels: n,
    })
}

/// A ratio field plus the number of pixels whose reference fell below
/// [`R11_FLOOR`] and were set to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratio {
    pub field: Field,
    pub floored: usize,
}

/// Per-pixel `(c * absorbing - reference) / reference`.
pub fn varon_ratio(r12: &Field, r11: &Field, c: ScaleFactor) -> Result<Ratio> {
    ensure_same_shape(r12.shape(), r11.shape())?;
    if !(c.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale factor {} is not finite", c.c)));
    }
    let mut floored = 0;
    let values = r12
        .values()
        .iter()
        .zip(r11.values())
        .map(|(&a, &r)| {
            let r = f64::from(r);
            if r <= R11_FLOOR {
                floored += 1;
                0.0
            } else {
                ((c.c * f64::from(a) - r) / r) as f32
            }
        })
        .collect();
    if floored > 0 {
        log::warn!("{floored} pixels below the reference floor were set to 0");
    }
    Ok(Ratio {
        field: Field::new(r12.width(), r12.height(), values)?,
        floored,
    })
}

/// Multi-linear model predicting methane-free band 12 radiance from
/// non-absorbing bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    #[serde(rename = "predictors")]
    pub predictor_bands: Vec<BandId>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_rms: f64,
}

impl RegressionModel {
    /// True when every coefficient is zero, i.e. the prediction is a constant
    /// fill that carries none of the scene's natural variability.
    pub fn is_intercept_only(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0.0)
    }
}

/// Ordinary least squares with intercept, fit on background pixels.
pub fn fit_background_regression(
    scene: &Scene,
    background_mask: Option<&Mask>,
    predictor_bands: &[BandId],
) -> Result<RegressionModel> {
    let target_id = BandId::b12();
    let target = scene.band(&target_id)?;
    if predictor_bands.is_empty() {
        return Err(Error::InvalidArgument("at least one predictor band is required".into()));
    }
    if predictor_bands.contains(&target_id) {
        return Err(Error::InvalidArgument("B12 cannot predict itself".into()));
    }
    if let Some(m) = background_mask {
        ensure_same_shape(scene.shape(), m.shape())?;
    }
    let predictors: Vec<&Field> = predictor_bands
        .iter()
        .map(|b| scene.band(b))
        .collect::<Result<_>>()?;

    let cols = predictors.len() + 1;
    let mut design = Vec::new();
    let mut y = Vec::new();
    for i in 0..target.len() {
        if selected(background_mask, i) {
            design.extend(predictors.iter().map(|p| f64::from(p.values()[i])));
            design.push(1.0);
            y.push(f64::from(target.values()[i]));
        }
    }
    let rows = y.len();
    if rows < cols {
        return Err(Error::DegenerateFit(format!(
            "{rows} background pixels cannot fit {cols} parameters"
        )));
    }
    let beta = linalg::least_squares(&design, rows, cols, &y)?;
    let sse: f64 = design
        .chunks_exact(cols)
        .zip(&y)
        .map(|(row, &t)| {
            let pred: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (pred - t) * (pred - t)
        })
        .sum();
    Ok(RegressionModel {
        predictor_bands: predictor_bands.to_vec(),
        coefficients: beta[..cols - 1].to_vec(),
        intercept: beta[cols - 1],
        residual_rms: (sse / rows as f64).sqrt(),
    })
}

/// Evaluates `sum(beta_i * band_i) + intercept` per pixel.
pub fn predict_r12(model: &RegressionModel, scene: &Scene) -> Result<Field> {
    if model.coefficients.len() != model.predictor_bands.len() {
        return Err(Error::Invariant(format!(
            "model has {} coefficients for {} predictors",
            model.coefficients.len(),
            model.predictor_bands.len()
        )));
    }
    let bands: Vec<&Field> = model
        .predictor_bands
        .iter()
        .map(|b| scene.band(b))
        .collect::<Result<_>>()?;
    let (w, h) = scene.shape();
    let values = (0..w * h)
        .map(|i| {
            let mut acc = model.intercept;
            for (band, &beta) in bands.iter().zip(&model.coefficients) {
                acc += beta * f64::from(band.values()[i]);
            }
            acc as f32
        })
        .collect();
    Field::new(w, h, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanchezRatio {
    pub ratio: Ratio,
    /// Scale factor re-fit against the predicted reference.
    pub scale: ScaleFactor,
}

/// `S = V(R12, R12_hat)` with its own scale factor fit against the
/// predicted radiance over `fit_mask`.
pub fn sanchez_ratio(r12: &Field, r12_hat: &Field, fit_mask: Option<&Mask>) -> Result<SanchezRatio> {
    let scale = fit_scale_c(r12, r12_hat, fit_mask)?;
    let ratio = varon_ratio(r12, r12_hat, scale)?;
    Ok(SanchezRatio { ratio, scale })
}

/// Mean and standard deviation removed from one stack channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Pseudo-RGB `[V, S, V]` feature stack.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: [Field; 3],
    normalization: Option<[ChannelStats; 3]>,
}

impl FeatureStack {
    /// Reassembles a stack, e.g. after reading it back from disk.
    pub fn from_parts(channels: [Field; 3], normalization: Option<[ChannelStats; 3]>) -> Result<Self> {
        ensure_same_shape(channels[0].shape(), channels[1].shape())?;
        ensure_same_shape(channels[0].shape(), channels[2].shape())?;
        Ok(FeatureStack {
            channels,
            normalization,
        })
    }

    pub fn channels(&self) -> &[Field; 3] {
        &self.channels
    }

    pub fn into_channels(self) -> [Field; 3] {
        self.channels
    }

    pub fn v(&self) -> &Field {
        &self.channels[0]
    }

    pub fn s(&self) -> &Field {
        &self.channels[1]
    }

    pub fn normalization(&self) -> Option<&[ChannelStats; 3]> {
        self.normalization.as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn bit_eq(&self, other: &FeatureStack) -> bool {
        self.normalization == other.normalization
            && self
                .channels
                .iter()
                .zip(&other.channels)
                .all(|(a, b)| a.bit_eq(b))
    }
}

pub fn stack_vsv(v: &Field, s: &Field) -> Result<FeatureStack> {
    ensure_same_shape(v.shape(), s.shape())?;
    Ok(FeatureStack {
        channels: [v.clone(), s.clone(), v.clone()],
        normalization: None,
    })
}

/// Per-channel `(x - mean) / max(std, SIGMA_FLOOR)` with population
/// statistics of this stack alone.
pub fn zscore(stack: &FeatureStack) -> Result<FeatureStack> {
    if stack.channels[0].len() < 2 {
        return Err(Error::InvalidArgument("z-score needs at least 2 pixels".into()));
    }
    let mut stats = [ChannelStats { mean: 0.0, std: 0.0 }; 3];
    let channels = std::array::from_fn(|k| {
        let ch = &stack.channels[k];
        let (mean, std) = stats::mean_std(ch.values());
        stats[k] = ChannelStats { mean, std };
        let denom = std.max(SIGMA_FLOOR);
        ch.map(|x| ((f64::from(x) - mean) / denom) as f32)
    });
    Ok(FeatureStack {
        channels,
        normalization: Some(stats),
    })
}

/// Which pixels count as methane-free when fitting `c`, `c'` and the
/// band 12 regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BackgroundSupport {
    All,
    /// Pixels whose preliminary Varon ratio lies inside the nearest-rank
    /// percentile band `[p_lo, p_hi]`.
    Percentile { p_lo: f64, p_hi: f64 },
}

impl Default for BackgroundSupport {
    fn default() -> Self {
        BackgroundSupport::Percentile {
            p_lo: 2.5,
            p_hi: 97.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceConfig {
    pub predictors: Vec<BandId>,
    pub background: BackgroundSupport,
    pub zscore: bool,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            predictors: vec![BandId::b11()],
            background: BackgroundSupport::default(),
            zscore: true,
        }
    }
}

/// Everything computed by [`enhance_scene`].
#[derive(Debug, Clone)]
pub struct Enhancement {
    pub varon: Ratio,
    pub varon_scale: ScaleFactor,
    pub sanchez: SanchezRatio,
    pub model: RegressionModel,
    pub background: Mask,
    pub stack: FeatureStack,
}

/// Scene to feature stack: background selection, Varon ratio, background
/// regression, Sánchez ratio, `[V, S, V]` stacking and optional z-scoring.
pub fn enhance_scene(scene: &Scene, cfg: &EnhanceConfig) -> Result<Enhancement> {
    let (r11, r12) = scene.swir()?;
    let background = match cfg.background {
        BackgroundSupport::All => Mask::from_fn(scene.width(), scene.height(), |_, _| 1),
        BackgroundSupport::Percentile { p_lo, p_hi } => {
            let c0 = fit_scale_c(r12, r11, None)?;
            let v0 = varon_ratio(r12, r11, c0)?;
            synth::background_mask_percentile(&v0.field, p_lo, p_hi)?
        }
    };
    let varon_scale = fit_scale_c(r12, r11, Some(&background))?;
    let varon = varon_ratio(r12, r11, varon_scale)?;
    let model = fit_background_regression(scene, Some(&background), &cfg.predictors)?;
    let r12_hat = predict_r12(&model, scene)?;
    let sanchez = sanchez_ratio(r12, &r12_hat, Some(&background))?;
    let mut stack = stack_vsv(&varon.field, &sanchez.ratio.field)?;
    if cfg.zscore {
        stack = zscore(&stack)?;
    }
    Ok(Enhancement {
        varon,
        varon_scale,
        sanchez,
        model,
        background,
        stack,
    })
}
