use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use plume_core::dataset::{build_dataset, DatasetConfig, Manifest};
use plume_core::detect::{detect_plumes, Channel, DetectorConfig};
use plume_core::enhance::{enhance_scene, EnhanceConfig};
use plume_core::evalmetrics::{difference_map, evaluate_manifest, prediction_path};
use plume_core::labeling::{
    assign_sources, connected_components, contours_to_geojson, extract_contours, mask_from_threshold, Vent,
};
use plume_core::raster::{export_image, read_brf, write_brf, BrfObject, Colormap};
use plume_core::synth::{generate_scene, SceneConfig};
use plume_core::{BandId, Field};

use crate::{usage, Command, DatasetBuildArgs, DatasetCommand, DetectArgs, DiffmapArgs, EnhanceArgs, EvalArgs, LabelArgs, RenderArgs, SynthArgs};

pub(crate) struct Outcome {
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub summary: Value,
    pub record_path: PathBuf,
}

/// Declared file traffic of one run.
#[derive(Default)]
struct Io {
    inputs: BTreeMap<String, PathBuf>,
    outputs: BTreeMap<String, PathBuf>,
}

impl Io {
    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.to_path_buf());
        self
    }

    fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.to_path_buf());
        self
    }

    /// Refuses runs that would overwrite one of their own inputs.
    fn check(self) -> Result<Self> {
        for (o, out) in &self.outputs {
            for (i, inp) in &self.inputs {
                if out == inp {
                    return usage(format!("output {o} would overwrite input {i} ({})", out.display()));
                }
            }
        }
        Ok(self)
    }

    fn finish(self, config: Value, seed: Option<u64>, summary: Value, record_path: PathBuf) -> Outcome {
        Outcome {
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            summary,
            record_path,
        }
    }
}

/// `pred.brf` gets its record at `pred.run.json`.
fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("run.json")
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub(crate) fn dispatch(command: &Command, seed: Option<u64>) -> Result<Outcome> {
    match command {
        Command::Enhance(a) => enhance(a),
        Command::Synth(a) => synth(a, seed),
        Command::Label(a) => label(a),
        Command::Dataset(DatasetCommand::Build(a)) => dataset_build(a, seed),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Diffmap(a) => diffmap(a),
        Command::Render(a) => render(a),
        Command::Replay(_) => unreachable!("replay is resolved before dispatch"),
    }
}

fn synth(a: &SynthArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut cfg: SceneConfig = load_config(a.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (scene_path, mask_path, echo_path) = (a.out.join("scene.brf"), a.out.join("mask.brf"), a.out.join("config.json"));
    let mut io = Io::default()
        .output("scene", &scene_path)
        .output("mask", &mask_path)
        .output("config", &echo_path);
    if let Some(c) = &a.config {
        io = io.input("config", c);
    }
    let io = io.check()?;
    let g = generate_scene(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_brf(&BrfObject::Scene(g.scene), &scene_path)?;
    let plume_px = g.mask.count_foreground();
    write_brf(&BrfObject::Mask(g.mask), &mask_path)?;
    write_json(&echo_path, &cfg)?;
    let summary = json!({
        "plume_pixels": plume_px,
        "artifact_pixels": g.artifacts.count_foreground(),
        "clipped_plume_pixels": g.clipped,
    });
    Ok(io.finish(serde_json::to_value(&cfg)?, Some(cfg.seed), summary, a.out.join("run.json")))
}

fn enhance(a: &EnhanceArgs) -> Result<Outcome> {
    let mut cfg: EnhanceConfig = load_config(a.config.as_deref())?;
    if a.no_zscore {
        cfg.zscore = false;
    }
    let mut io = Io::default().input("scene", &a.scene).output("stack", &a.out);
    if let Some(c) = &a.config {
        io = io.input("config", c);
    }
    let io = io.check()?;
    let scene = read_brf(&a.scene)?.into_scene()?;
    let e = enhance_scene(&scene, &cfg)?;
    ensure_parent(&a.out)?;
    write_brf(&BrfObject::Stack(e.stack), &a.out)?;
    let summary = json!({
        "varon_scale": e.varon_scale,
        "varon_floored_pixels": e.varon.floored,
        "sanchez_scale": e.sanchez.scale,
        "sanchez_floored_pixels": e.sanchez.ratio.floored,
        "model": e.model,
        "background_pixels": e.background.count_foreground(),
    });
    Ok(io.finish(serde_json::to_value(&cfg)?, None, summary, sidecar(&a.out)))
}

fn stack_channel(stack: &plume_core::enhance::FeatureStack, channel: Channel) -> Field {
    match channel {
        Channel::V => stack.v().clone(),
        _ => stack.s().clone(),
    }
}

fn label(a: &LabelArgs) -> Result<Outcome> {
    let mut io = Io::default().output("labels", &a.out);
    if let Some(p) = &a.input {
        io = io.input("in", p);
    }
    if let Some(p) = &a.mask {
        io = io.input("mask", p);
    }
    if let Some(p) = &a.vents {
        io = io.input("vents", p);
    }
    if let Some(p) = &a.contours {
        io = io.output("contours", p);
    }
    let io = io.check()?;
    let mask = match (&a.mask, &a.input) {
        (Some(m), _) => read_brf(m)?.into_mask()?.binarized(),
        (None, Some(input)) => {
            let field = match read_brf(input)? {
                BrfObject::Mask(m) => m.to_field(),
                BrfObject::Field(f) => f,
                BrfObject::Stack(s) => stack_channel(&s, a.channel.unwrap_or(Channel::S)),
                BrfObject::Scene(_) => return usage("label --in expects a field, stack or mask, not a scene"),
            };
            let Some(thr) = a.threshold else {
                return usage("label --in requires --threshold");
            };
            mask_from_threshold(&field, thr, a.direction)
        }
        (None, None) => return usage("label needs --in or --mask"),
    };
    let components = connected_components(&mask, a.connectivity);
    let labels = match &a.vents {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading vents {}", p.display()))?;
            let vents: Vec<Vent> = serde_json::from_str(&text).with_context(|| format!("parsing vents {}", p.display()))?;
            assign_sources(&components, &vents, mask.width(), mask.height())?
        }
        None => mask.clone(),
    };
    ensure_parent(&a.out)?;
    write_brf(&BrfObject::Mask(labels), &a.out)?;
    if let Some(p) = &a.contours {
        ensure_parent(p)?;
        write_json(p, &contours_to_geojson(&extract_contours(&mask)))?;
    }
    let config = json!({
        "channel": a.channel,
        "threshold": a.threshold,
        "direction": a.direction,
        "connectivity": a.connectivity,
    });
    let summary = json!({
        "components": components.len(),
        "areas_px": components.iter().map(|c| c.area_px).collect::<Vec<_>>(),
    });
    Ok(io.finish(config, None, summary, sidecar(&a.out)))
}

fn dataset_build(a: &DatasetBuildArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut cfg: DatasetConfig = load_config(Some(&a.config))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let root = a.out.join(&cfg.dataset_id);
    let manifest_path = root.join("manifest.json");
    let io = Io::default()
        .input("config", &a.config)
        .output("manifest", &manifest_path)
        .check()?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let manifest = build_dataset(&cfg, base, &a.out)?;
    let val = manifest.split(plume_core::dataset::Split::Val).count();
    let summary = json!({
        "samples": manifest.samples.len(),
        "train": manifest.samples.len() - val,
        "val": val,
        "with_plume": manifest.samples.iter().filter(|s| s.has_plume).count(),
        "config_hash": manifest.config_hash,
    });
    Ok(io.finish(serde_json::to_value(&cfg)?, Some(cfg.seed), summary, root.join("run.json")))
}

fn detect(a: &DetectArgs) -> Result<Outcome> {
    let cfg = DetectorConfig {
        k_sigma: a.k,
        channel: a.channel,
        min_area_px: a.min_area,
        connectivity: a.connectivity,
    };
    if !(a.k.is_finite() && a.k > 0.0) {
        return usage(format!("--k must be > 0, got {}", a.k));
    }
    if a.min_area == 0 {
        return usage("--min-area must be >= 1");
    }
    let config = serde_json::to_value(cfg)?;
    match (&a.input, &a.manifest) {
        (Some(input), _) => {
            let io = Io::default().input("stack", input).output("prediction", &a.out).check()?;
            let stack = read_brf(input)?.into_stack()?;
            let det = detect_plumes(&stack, &cfg)?;
            ensure_parent(&a.out)?;
            let detected = det.mask.count_foreground();
            write_brf(&BrfObject::Mask(det.mask), &a.out)?;
            let summary = json!({ "detected_pixels": detected, "stats": det.stats, "warning": det.warning });
            Ok(io.finish(config, None, summary, sidecar(&a.out)))
        }
        (None, Some(manifest_path)) => {
            let io = Io::default()
                .input("manifest", manifest_path)
                .output("predictions", &a.out)
                .check()?;
            let manifest = Manifest::load(manifest_path)?;
            let dir = manifest_path.parent().unwrap_or(Path::new("."));
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let records: Vec<_> = manifest
                .samples
                .iter()
                .filter(|r| a.split.is_none_or(|s| r.split == s))
                .collect();
            let results: Vec<Result<(String, usize, Option<String>)>> = records
                .par_iter()
                .map(|r| {
                    let stack = read_brf(dir.join(&r.stack_path))?.into_stack()?;
                    let det = detect_plumes(&stack, &cfg)?;
                    let n = det.mask.count_foreground();
                    write_brf(&BrfObject::Mask(det.mask), prediction_path(&a.out, &r.id))?;
                    Ok((r.id.clone(), n, det.warning))
                })
                .collect();
            let mut detected = 0;
            let mut warnings = Vec::new();
            for r in results {
                let (id, n, warning) = r?;
                detected += n;
                if let Some(w) = warning {
                    warnings.push(json!({ "id": id, "warning": w }));
                }
            }
            let summary = json!({ "samples": records.len(), "detected_pixels": detected, "warnings": warnings });
            Ok(io.finish(config, None, summary, a.out.join("run.json")))
        }
        (None, None) => usage("detect needs --in or --manifest"),
    }
}

fn eval(a: &EvalArgs) -> Result<Outcome> {
    let table_path = a.out.with_extension("txt");
    let io = Io::default()
        .input("manifest", &a.manifest)
        .input("predictions", &a.pred)
        .output("report", &a.out)
        .output("table", &table_path)
        .check()?;
    let manifest = Manifest::load(&a.manifest)?;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let report = evaluate_manifest(&manifest, dir, &a.pred, a.split)?;
    ensure_parent(&a.out)?;
    write_json(&a.out, &report)?;
    fs::write(&table_path, report.to_table()).with_context(|| format!("writing {}", table_path.display()))?;
    println!(
        "micro dice {:.4} iou {:.4} over {} samples",
        report.micro.dice, report.micro.iou, report.sample_count
    );
    let summary = json!({ "micro": report.micro, "macro": report.macro_, "sample_count": report.sample_count });
    Ok(io.finish(json!({ "split": a.split }), None, summary, sidecar(&a.out)))
}

fn diffmap(a: &DiffmapArgs) -> Result<Outcome> {
    let mut io = Io::default().input("pred", &a.pred).input("gt", &a.gt).output("diffmap", &a.out);
    if let Some(p) = &a.image {
        io = io.output("image", p);
    }
    let io = io.check()?;
    let pred = read_brf(&a.pred)?.into_mask()?;
    let gt = read_brf(&a.gt)?.into_mask()?;
    let diff = difference_map(&pred, &gt)?;
    let mut hist = [0usize; 4];
    for &c in diff.labels() {
        hist[c as usize] += 1;
    }
    ensure_parent(&a.out)?;
    if let Some(p) = &a.image {
        ensure_parent(p)?;
        export_image(&diff, p, Colormap::Diffmap)?;
    }
    write_brf(&BrfObject::Mask(diff), &a.out)?;
    let summary = json!({ "tn": hist[0], "tp": hist[1], "fp": hist[2], "fn": hist[3] });
    Ok(io.finish(Value::Null, None, summary, sidecar(&a.out)))
}

fn render(a: &RenderArgs) -> Result<Outcome> {
    let io = Io::default().input("raster", &a.input).output("image", &a.out).check()?;
    let object = read_brf(&a.input)?;
    let kind = object.kind();
    ensure_parent(&a.out)?;
    let rendered = match object {
        BrfObject::Scene(scene) => {
            let band = BandId::new(a.band.as_deref().unwrap_or("B12"));
            export_image(scene.band(&band)?, &a.out, a.colormap)?;
            json!({ "band": band })
        }
        BrfObject::Stack(stack) => {
            let channel = a.channel.unwrap_or(Channel::S);
            export_image(&stack_channel(&stack, channel), &a.out, a.colormap)?;
            json!({ "channel": channel })
        }
        BrfObject::Field(f) => {
            export_image(&f, &a.out, a.colormap)?;
            Value::Null
        }
        BrfObject::Mask(m) => {
            export_image(&m, &a.out, a.colormap)?;
            Value::Null
        }
    };
    let config = json!({ "colormap": a.colormap, "selection": rendered });
    Ok(io.finish(config, None, json!({ "kind": kind }), sidecar(&a.out)))
}
