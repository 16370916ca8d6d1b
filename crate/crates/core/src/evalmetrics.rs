//! Segmentation scoring: confusion counts, Dice/F1 and IoU, reference loss
//! values and difference maps.
//!
//! Scores use the convention that an empty prediction on an empty ground
//! truth (`tp = fp = fn = 0`) is a perfect 1.0, so all-background tiles that
//! are correctly left empty are rewarded rather than reported as undefined.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, Split};
use crate::raster::{ensure_same_shape, read_brf, Field, Mask};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Dice as an exact `(numerator, denominator)` pair.
    pub fn dice_fraction(&self) -> (u64, u64) {
        (2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// IoU as an exact `(numerator, denominator)` pair.
    pub fn iou_fraction(&self) -> (u64, u64) {
        (self.tp, self.tp + self.fp + self.fn_)
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), |a, b| a + b)
    }
}

/// Pixel counts after binarizing both masks (nonzero is plume).
pub fn confusion(pred: &Mask, gt: &Mask) -> Result<Confusion> {
    ensure_same_shape(gt.shape(), pred.shape())?;
    let mut c = Confusion::default();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio((num, den): (u64, u64)) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// `2tp / (2tp + fp + fn)`; 1.0 when there is nothing to find and nothing found.
pub fn dice_f1(c: &Confusion) -> f64 {
    ratio(c.dice_fraction())
}

/// `tp / (tp + fp + fn)`; 1.0 in the empty case.
pub fn iou(c: &Confusion) -> f64 {
    ratio(c.iou_fraction())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_focal: f64,
    pub lambda_dice: f64,
    pub dice_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.25,
            gamma: 2.0,
            lambda_focal: 1.0,
            lambda_dice: 1.0,
            dice_eps: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha <= 1.0
            && self.gamma >= 0.0
            && self.lambda_focal >= 0.0
            && self.lambda_dice >= 0.0
            && self.lambda_focal + self.lambda_dice > 0.0
            && self.dice_eps > 0.0
            && [self.alpha, self.gamma, self.lambda_focal, self.lambda_dice, self.dice_eps]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid loss config {self:?}")))
        }
    }
}

fn check_probs(probs: &Field, gt: &Mask) -> Result<()> {
    ensure_same_shape(gt.shape(), probs.shape())?;
    if probs.is_empty() {
        return Err(Error::InvalidArgument("empty probability field".into()));
    }
    if let Some(p) = probs.values().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Mean of `-alpha (1 - p_t)^gamma ln(p_t)` with `p_t = p` on plume pixels
/// and `1 - p` elsewhere.
pub fn focal_loss(probs: &Field, gt: &Mask, cfg: &LossConfig) -> Result<f64> {
    check_probs(probs, gt)?;
    let sum: f64 = probs
        .values()
        .iter()
        .zip(gt.labels())
        .map(|(&p, &g)| {
            let p = f64::from(p).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let pt = if g != 0 { p } else { 1.0 - p };
            -cfg.alpha * (1.0 - pt).powf(cfg.gamma) * pt.ln()
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Soft Dice loss `1 - (2 sum(p g) + eps) / (sum p + sum g + eps)`.
pub fn dice_loss(probs: &Field, gt: &Mask, eps: f64) -> Result<f64> {
    check_probs(probs, gt)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("dice eps must be > 0, got {eps}")));
    }
    let (mut inter, mut sp, mut sg) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &g) in probs.values().iter().zip(gt.labels()) {
        let p = f64::from(p);
        let g = f64::from(u8::from(g != 0));
        inter += p * g;
        sp += p;
        sg += g;
    }
    Ok(1.0 - (2.0 * inter + eps) / (sp + sg + eps))
}

/// `lambda_focal * focal + lambda_dice * dice`.
pub fn combined_loss(probs: &Field, gt: &Mask, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let focal = focal_loss(probs, gt, cfg)?;
    let dice = dice_loss(probs, gt, cfg.dice_eps)?;
    Ok(cfg.lambda_focal * focal + cfg.lambda_dice * dice)
}

/// Per-pixel outcome code used by difference maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum DiffCode {
    Tn = 0,
    Tp = 1,
    Fp = 2,
    Fn = 3,
}

impl DiffCode {
    pub fn from_u8(v: u8) -> Option<DiffCode> {
        match v {
            0 => Some(DiffCode::Tn),
            1 => Some(DiffCode::Tp),
            2 => Some(DiffCode::Fp),
            3 => Some(DiffCode::Fn),
            _ => None,
        }
    }

    /// Black, green, red, yellow.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            DiffCode::Tn => [0, 0, 0],
            DiffCode::Tp => [0, 255, 0],
            DiffCode::Fp => [255, 0, 0],
            DiffCode::Fn => [255, 255, 0],
        }
    }
}

pub fn difference_map(pred: &Mask, gt: &Mask) -> Result<Mask> {
    ensure_same_shape(gt.shape(), pred.shape())?;
    let codes = pred
        .labels()
        .iter()
        .zip(gt.labels())
        .map(|(&p, &g)| {
            (match (p != 0, g != 0) {
                (true, true) => DiffCode::Tp,
                (true, false) => DiffCode::Fp,
                (false, true) => DiffCode::Fn,
                (false, false) => DiffCode::Tn,
            }) as u8
        })
        .collect();
    Mask::new(pred.width(), pred.height(), codes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub dice: f64,
    pub iou: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroScores {
    pub dice: f64,
    pub iou: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub dice: f64,
    pub iou: f64,
}

/// Per-sample scores plus micro (summed confusion) and macro (mean of
/// per-sample scores) aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleScore>,
    pub micro: MicroScores,
    #[serde(rename = "macro")]
    pub macro_: MacroScores,
    pub sample_count: usize,
}

impl EvalReport {
    pub fn from_confusions(items: Vec<(String, Confusion)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("nothing to evaluate".into()));
        }
        let samples: Vec<SampleScore> = items
            .into_iter()
            .map(|(id, c)| SampleScore {
                id,
                dice: dice_f1(&c),
                iou: iou(&c),
                confusion: c,
            })
            .collect();
        let total: Confusion = samples.iter().map(|s| s.confusion).sum();
        let n = samples.len() as f64;
        Ok(EvalReport {
            micro: MicroScores {
                dice: dice_f1(&total),
                iou: iou(&total),
                confusion: total,
            },
            macro_: MacroScores {
                dice: samples.iter().map(|s| s.dice).sum::<f64>() / n,
                iou: samples.iter().map(|s| s.iou).sum::<f64>() / n,
            },
            sample_count: samples.len(),
            samples,
        })
    }

    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<32} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10}", "sample", "dice", "iou", "tp", "fp", "fn", "tn");
        for s in &self.samples {
            let c = s.confusion;
            let _ = writeln!(
                out,
                "{:<32} {:>8.4} {:>8.4} {:>8} {:>8} {:>8} {:>10}",
                s.id, s.dice, s.iou, c.tp, c.fp, c.fn_, c.tn
            );
        }
        let c = self.micro.confusion;
        let _ = writeln!(
            out,
            "{:<32} {:>8.4} {:>8.4} {:>8} {:>8} {:>8} {:>10}",
            "micro", self.micro.dice, self.micro.iou, c.tp, c.fp, c.fn_, c.tn
        );
        let _ = writeln!(out, "{:<32} {:>8.4} {:>8.4}", "macro", self.macro_.dice, self.macro_.iou);
        out
    }
}

/// Path of the prediction mask for sample `id`.
pub fn prediction_path(pred_dir: &Path, id: &str) -> std::path::PathBuf {
    pred_dir.join(format!("{id}.brf"))
}

/// Scores `<pred_dir>/<id>.brf` against each ground-truth mask of `split`
/// (all samples when `None`). Every missing prediction is listed in the error.
pub fn evaluate_manifest(
    manifest: &Manifest,
    manifest_dir: &Path,
    pred_dir: &Path,
    split: Option<Split>,
) -> Result<EvalReport> {
    let records: Vec<_> = manifest
        .samples
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    if records.is_empty() {
        return Err(Error::InvalidArgument("manifest has no samples to evaluate".into()));
    }
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !prediction_path(pred_dir, &r.id).is_file())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let score = |r: &&crate::dataset::SampleRecord| -> Result<(String, Confusion)> {
        let pred = read_brf(prediction_path(pred_dir, &r.id))?.into_mask()?;
        let gt = read_brf(manifest_dir.join(&r.mask_path))?.into_mask()?;
        Ok((r.id.clone(), confusion(&pred, &gt)?))
    };
    #[cfg(feature = "parallel")]
    let items: Vec<Result<(String, Confusion)>> = {
        use rayon::prelude::*;
        records.par_iter().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let items: Vec<Result<(String, Confusion)>> = records.iter().map(score).collect();
    EvalReport::from_confusions(items.into_iter().collect::<Result<_>>()?)
}
