//! Model-free baseline detector: robust anomaly thresholding of the ratio
//! channels followed by a connected-component area filter.
//!
//! Methane suppresses band 12, so plumes are *negative* excursions of V and
//! S. A pixel is anomalous when it lies more than `k_sigma` robust standard
//! deviations (1.4826 * MAD) below the channel median.

use serde::{Deserialize, Serialize};

use crate::enhance::FeatureStack;
use crate::labeling::{connected_components, Connectivity};
use crate::raster::{Field, Mask};
use crate::{stats, Error, Result};

/// Scales the MAD to a standard deviation for Gaussian data.
pub const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "V")]
    V,
    #[serde(rename = "S")]
    S,
    /// Requires V and S to be anomalous at the same pixel.
    #[serde(rename = "min")]
    MinVS,
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" | "v" => Ok(Channel::V),
            "S" | "s" => Ok(Channel::S),
            "min" | "min(V,S)" => Ok(Channel::MinVS),
            other => Err(Error::InvalidArgument(format!("unknown detector channel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub k_sigma: f64,
    pub channel: Channel,
    pub min_area_px: usize,
    pub connectivity: Connectivity,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            k_sigma: 4.0,
            channel: Channel::S,
            min_area_px: 1,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustStats {
    pub median: f64,
    pub robust_std: f64,
}

impl RobustStats {
    pub fn of(field: &Field) -> Option<RobustStats> {
        let values: Vec<f64> = field.values().iter().map(|&v| f64::from(v)).collect();
        let (median, mad) = stats::median_mad(&values)?;
        Some(RobustStats {
            median,
            robust_std: MAD_TO_SIGMA * mad,
        })
    }

    /// Values strictly below this are anomalous at depth `k_sigma`.
    pub fn threshold(&self, k_sigma: f64) -> f64 {
        self.median - k_sigma * self.robust_std
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Binary detection mask.
    pub mask: Mask,
    /// Statistics of each channel consulted, in `[V, S]` order.
    pub stats: Vec<RobustStats>,
    pub warning: Option<String>,
}

pub fn detect_plumes(stack: &FeatureStack, cfg: &DetectorConfig) -> Result<Detection> {
    if !(cfg.k_sigma.is_finite() && cfg.k_sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("k_sigma must be > 0, got {}", cfg.k_sigma)));
    }
    if cfg.min_area_px == 0 {
        return Err(Error::InvalidArgument("min_area_px must be >= 1".into()));
    }
    let (w, h) = stack.shape();
    let channels: Vec<&Field> = match cfg.channel {
        Channel::V => vec![stack.v()],
        Channel::S => vec![stack.s()],
        Channel::MinVS => vec![stack.v(), stack.s()],
    };
    let stats: Vec<RobustStats> = channels
        .iter()
        .map(|c| RobustStats::of(c).ok_or_else(|| Error::InvalidArgument("empty stack".into())))
        .collect::<Result<_>>()?;
    if stats.iter().any(|s| s.robust_std == 0.0) {
        let warning = "channel has zero MAD; no anomalies can be scored".to_string();
        log::warn!("{warning}");
        return Ok(Detection {
            mask: Mask::zeros(w, h),
            stats,
            warning: Some(warning),
        });
    }
    let thresholds: Vec<f64> = stats.iter().map(|s| s.threshold(cfg.k_sigma)).collect();
    let candidates = Mask::from_fn(w, h, |x, y| {
        u8::from(
            channels
                .iter()
                .zip(&thresholds)
                .all(|(c, &t)| f64::from(c.get(x, y)) < t),
        )
    });
    let mut mask = Mask::zeros(w, h);
    for comp in connected_components(&candidates, cfg.connectivity) {
        if comp.area_px >= cfg.min_area_px {
            for (x, y) in comp.pixels {
                mask.set(x, y, 1);
            }
        }
    }
    Ok(Detection {
        mask,
        stats,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::stack_vsv;

    fn ramp_with_dip(dip: Option<(usize, usize)>) -> FeatureStack {
        let f = Field::from_fn(9, 9, |x, y| {
            if Some((x, y)) == dip {
                -100.0
            } else {
                ((x * 7 + y * 3) % 11) as f32 * 0.1
            }
        });
        stack_vsv(&f, &f).unwrap()
    }

    #[test]
    fn constant_channel_gives_empty_mask_with_warning() {
        let st = stack_vsv(&Field::filled(4, 4, 1.0), &Field::filled(4, 4, 1.0)).unwrap();
        let d = detect_plumes(&st, &DetectorConfig::default()).unwrap();
        assert!(!d.mask.has_foreground());
        assert!(d.warning.is_some());
    }

    #[test]
    fn single_dip_is_found_and_area_filter_removes_it() {
        let st = ramp_with_dip(Some((4, 5)));
        let d = detect_plumes(&st, &DetectorConfig::default()).unwrap();
        assert_eq!(d.mask.count_foreground(), 1);
        assert_eq!(d.mask.get(4, 5), 1);
        let cfg = DetectorConfig {
            min_area_px: 2,
            ..DetectorConfig::default()
        };
        assert!(!detect_plumes(&st, &cfg).unwrap().mask.has_foreground());
    }

    #[test]
    fn joint_channel_needs_both() {
        let v = Field::from_fn(9, 9, |x, y| if (x, y) == (2, 2) { -100.0 } else { ((x + 2 * y) % 5) as f32 });
        let s = Field::from_fn(9, 9, |x, y| ((x + 2 * y) % 5) as f32);
        let st = stack_vsv(&v, &s).unwrap();
        let joint = DetectorConfig {
            channel: Channel::MinVS,
            ..DetectorConfig::default()
        };
        assert!(!detect_plumes(&st, &joint).unwrap().mask.has_foreground());
        let only_v = DetectorConfig {
            channel: Channel::V,
            ..DetectorConfig::default()
        };
        assert_eq!(detect_plumes(&st, &only_v).unwrap().mask.count_foreground(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let st = ramp_with_dip(None);
        let bad = DetectorConfig {
            k_sigma: 0.0,
            ..DetectorConfig::default()
        };
        assert!(detect_plumes(&st, &bad).is_err());
    }

    #[test]
    fn channel_parsing() {
        assert_eq!("S".parse::<Channel>().unwrap(), Channel::S);
        assert_eq!("min".parse::<Channel>().unwrap(), Channel::MinVS);
        assert!("X".parse::<Channel>().is_err());
    }
}
