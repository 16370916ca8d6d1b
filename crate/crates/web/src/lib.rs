//! WebAssembly bindings for the browser demo in `www/`.
//!
//! A [`Demo`] holds one synthetic scene. The page drives three operations:
//! generating the scene, enhancing it with an adjustable background
//! percentile band, and detecting plumes with an adjustable threshold. Images
//! come back as RGBA bytes ready for `ImageData`.
//!
//! Every exported method has a `try_` twin returning a plain `Result` so the
//! logic runs in native tests.

use wasm_bindgen::prelude::*;

use plume_core::detect::{detect_plumes, Channel, DetectorConfig};
use plume_core::enhance::{enhance_scene, BackgroundSupport, EnhanceConfig, Enhancement};
use plume_core::evalmetrics::{confusion, dice_f1, difference_map, iou};
use plume_core::labeling::Connectivity;
use plume_core::raster::{render_rgb, Colormap, ImageSource};
use plume_core::synth::{generate_scene, NoiseSpec, PlumeSpec, SceneConfig};
use plume_core::{BandId, Error, Mask, Result, Scene};

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba<'a>(source: impl Into<ImageSource<'a>>, colormap: Colormap) -> Result<Vec<u8>> {
    let rgb = render_rgb(source, colormap)?;
    Ok(rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect())
}

/// Background pixels tinted blue over a dimmed grayscale `base`.
fn overlay(base: &[u8], mask: &Mask) -> Vec<u8> {
    base.chunks_exact(4)
        .zip(mask.labels())
        .flat_map(|(p, &m)| {
            if m != 0 {
                [p[0] / 3, p[1] / 3, 128 + p[2] / 2, 255]
            } else {
                [p[0] / 2, p[1] / 2, p[2] / 2, 255]
            }
        })
        .collect()
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    truth: Mask,
    enhancement: Enhancement,
}

#[wasm_bindgen]
pub struct DetectView {
    rgba: Vec<u8>,
    dice: f64,
    iou: f64,
    tp: u32,
    fp: u32,
    fn_: u32,
}

#[wasm_bindgen]
impl DetectView {
    /// Difference map: TP green, FP red, FN yellow, TN black.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn dice(&self) -> f64 {
        self.dice
    }

    #[wasm_bindgen(getter)]
    pub fn iou(&self) -> f64 {
        self.iou
    }

    #[wasm_bindgen(getter)]
    pub fn tp(&self) -> u32 {
        self.tp
    }

    #[wasm_bindgen(getter)]
    pub fn fp(&self) -> u32 {
        self.fp
    }

    #[wasm_bindgen(getter, js_name = "fn")]
    pub fn false_negatives(&self) -> u32 {
        self.fn_
    }
}

impl Demo {
    pub fn try_new(seed: u32, size: usize, plume_sigma_px: f64, kappa: f64, noise_sigma: f64) -> Result<Demo> {
        let half = size as f64 / 2.0;
        let cfg = SceneConfig {
            width: size,
            height: size,
            noise: NoiseSpec {
                gaussian_sigma: noise_sigma,
                ..NoiseSpec::default()
            },
            plumes: vec![PlumeSpec {
                center_xy: (half - 0.5, half + 0.5),
                sigma_px: plume_sigma_px,
                peak_enhancement: 1.0,
                absorption_kappa: kappa,
                label_threshold: 0.05,
                source_id: 1,
            }],
            seed: u64::from(seed),
            ..SceneConfig::default()
        };
        let g = generate_scene(&cfg)?;
        let enhancement = enhance_scene(&g.scene, &EnhanceConfig::default())?;
        Ok(Demo {
            scene: g.scene,
            truth: g.mask,
            enhancement,
        })
    }

    pub fn try_enhance(&mut self, p_lo: f64, p_hi: f64) -> Result<()> {
        let cfg = EnhanceConfig {
            background: BackgroundSupport::Percentile { p_lo, p_hi },
            ..EnhanceConfig::default()
        };
        self.enhancement = enhance_scene(&self.scene, &cfg)?;
        Ok(())
    }

    pub fn try_image(&self, layer: &str) -> Result<Vec<u8>> {
        let stack = &self.enhancement.stack;
        match layer {
            "B11" | "B12" => rgba(self.scene.band(&BandId::from(layer))?, Colormap::Grayscale),
            "V" => rgba(stack.v(), Colormap::Grayscale),
            "S" => rgba(stack.s(), Colormap::Grayscale),
            "truth" => rgba(&self.truth.binarized(), Colormap::Grayscale),
            "background" => Ok(overlay(&rgba(stack.s(), Colormap::Grayscale)?, &self.enhancement.background)),
            other => Err(Error::InvalidArgument(format!("unknown layer {other:?}"))),
        }
    }

    pub fn try_detect(&self, k_sigma: f64, channel: &str, min_area_px: usize) -> Result<DetectView> {
        let cfg = DetectorConfig {
            k_sigma,
            channel: channel.parse::<Channel>()?,
            min_area_px,
            connectivity: Connectivity::Eight,
        };
        let pred = detect_plumes(&self.enhancement.stack, &cfg)?.mask;
        let c = confusion(&pred, &self.truth)?;
        Ok(DetectView {
            rgba: rgba(&difference_map(&pred, &self.truth)?, Colormap::Diffmap)?,
            dice: dice_f1(&c),
            iou: iou(&c),
            tp: c.tp as u32,
            fp: c.fp as u32,
            fn_: c.fn_ as u32,
        })
    }
}

#[wasm_bindgen]
impl Demo {
    /// Square scene with one Gaussian plume at its center.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: usize, plume_sigma_px: f64, kappa: f64, noise_sigma: f64) -> std::result::Result<Demo, JsError> {
        Demo::try_new(seed, size, plume_sigma_px, kappa, noise_sigma).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.scene.width()
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.scene.height()
    }

    /// Refits with background pixels restricted to a percentile band of the
    /// preliminary Varon ratio.
    pub fn enhance(&mut self, p_lo: f64, p_hi: f64) -> std::result::Result<(), JsError> {
        self.try_enhance(p_lo, p_hi).map_err(js)
    }

    /// One of `B11`, `B12`, `V`, `S`, `truth`, `background`.
    pub fn image(&self, layer: &str) -> std::result::Result<Vec<u8>, JsError> {
        self.try_image(layer).map_err(js)
    }

    /// Fitted `c` of the Varon ratio.
    #[wasm_bindgen(getter)]
    pub fn varon_c(&self) -> f64 {
        self.enhancement.varon_scale.c
    }

    /// Fitted `c'` of the Sánchez ratio.
    #[wasm_bindgen(getter)]
    pub fn sanchez_c(&self) -> f64 {
        self.enhancement.sanchez.scale.c
    }

    #[wasm_bindgen(getter)]
    pub fn background_pixels(&self) -> usize {
        self.enhancement.background.count_foreground()
    }

    pub fn detect(&self, k_sigma: f64, channel: &str, min_area_px: usize) -> std::result::Result<DetectView, JsError> {
        self.try_detect(k_sigma, channel, min_area_px).map_err(js)
    }
}
