//! The `plume` executable: each pipeline stage as a subcommand.
//!
//! Every successful run writes a [`RunRecord`] next to its outputs. The
//! record holds the parsed command with absolute paths, the resolved config
//! and the seed, so `plume replay --record <file>` repeats the run exactly.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or invariant errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use plume_core::dataset::Split;
use plume_core::detect::Channel;
use plume_core::labeling::{Connectivity, Direction};
use plume_core::raster::Colormap;

mod commands;
mod record;

pub use record::RunRecord;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Misuse of flags that clap cannot catch on its own. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Parser)]
#[command(name = "plume", version, about = "Methane plume enhancement, synthesis, detection and scoring")]
pub struct Cli {
    /// Worker threads for scene and tile parallelism (0 uses every core).
    /// Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Replaces the seed of the subcommand's config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Compute the [V, S, V] feature stack of a scene.
    Enhance(EnhanceArgs),
    /// Generate a synthetic scene and its ground-truth mask.
    Synth(SynthArgs),
    /// Threshold or load a mask, then label components and trace contours.
    Label(LabelArgs),
    /// Dataset operations.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the robust anomaly detector on one stack or a whole manifest.
    Detect(DetectArgs),
    /// Score prediction masks against a manifest.
    Eval(EvalArgs),
    /// Per-pixel TP/FP/FN/TN code mask of a prediction.
    Diffmap(DiffmapArgs),
    /// Export a BRF raster as a binary PPM image.
    Render(RenderArgs),
    /// Repeat a run from its run record.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetCommand {
    /// Tile, augment and split scenes into a training dataset.
    Build(DatasetBuildArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EnhanceArgs {
    /// Scene BRF with at least B11 and B12.
    #[arg(long)]
    pub scene: PathBuf,
    /// Enhancement config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output stack BRF.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the raw ratios instead of per-scene z-scores.
    #[arg(long)]
    pub no_zscore: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Scene config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for scene.brf, mask.brf and config.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LabelArgs {
    /// Field, stack or mask BRF to threshold.
    #[arg(long = "in", conflicts_with = "mask", required_unless_present = "mask")]
    pub input: Option<PathBuf>,
    /// Stack channel to threshold.
    #[arg(long, value_parser = parse_ratio_channel)]
    pub channel: Option<Channel>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f32>,
    #[arg(long, default_value = "below", value_parser = parse_direction)]
    pub direction: Direction,
    /// Operator-edited mask used as-is instead of thresholding.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value = "8", value_parser = parse_connectivity)]
    pub connectivity: Connectivity,
    /// JSON list of `{"name": .., "xy": [x, y]}` vents for source labels.
    #[arg(long)]
    pub vents: Option<PathBuf>,
    /// Output label mask BRF.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional GeoJSON-style contour output.
    #[arg(long)]
    pub contours: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DatasetBuildArgs {
    /// Dataset config JSON. Relative scene paths resolve against its directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; the dataset lands in `<out>/<dataset_id>/`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    /// Single stack BRF.
    #[arg(long = "in", conflicts_with = "manifest", required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    /// Run over every sample of a manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict manifest mode to one split.
    #[arg(long, requires = "manifest", value_parser = parse_split)]
    pub split: Option<Split>,
    /// Output mask BRF, or a directory of `<id>.brf` in manifest mode.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    pub k: f64,
    #[arg(long, default_value = "S")]
    pub channel: Channel,
    #[arg(long, default_value_t = 1)]
    pub min_area: usize,
    #[arg(long, default_value = "8", value_parser = parse_connectivity)]
    pub connectivity: Connectivity,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding one `<id>.brf` prediction per sample.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Report JSON; a text table is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiffmapArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Output code mask BRF.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional colored PPM rendering.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "grayscale")]
    pub colormap: Colormap,
    /// Scene band to render (default B12).
    #[arg(long)]
    pub band: Option<String>,
    /// Stack channel to render (default S).
    #[arg(long, value_parser = parse_ratio_channel)]
    pub channel: Option<Channel>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub record: PathBuf,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    let n: u8 = s.parse().map_err(|_| format!("expected 4 or 8, got {s:?}"))?;
    Connectivity::try_from(n).map_err(|e| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "below" => Ok(Direction::Below),
        "above" => Ok(Direction::Above),
        other => Err(format!("expected below or above, got {other:?}")),
    }
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        other => Err(format!("expected train or val, got {other:?}")),
    }
}

fn parse_ratio_channel(s: &str) -> Result<Channel, String> {
    match s.parse::<Channel>() {
        Ok(c @ (Channel::V | Channel::S)) => Ok(c),
        Ok(Channel::MinVS) => Err("only V or S can be selected here".into()),
        Err(e) => Err(e.to_string()),
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Enhance(_) => "enhance",
            Command::Synth(_) => "synth",
            Command::Label(_) => "label",
            Command::Dataset(DatasetCommand::Build(_)) => "dataset build",
            Command::Detect(_) => "detect",
            Command::Eval(_) => "eval",
            Command::Diffmap(_) => "diffmap",
            Command::Render(_) => "render",
            Command::Replay(_) => "replay",
        }
    }

    /// Resolves every path against `base` so records replay from any directory.
    fn absolutize(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let abs_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                abs(p);
            }
        };
        match self {
            Command::Enhance(a) => {
                abs(&mut a.scene);
                abs_opt(&mut a.config);
                abs(&mut a.out);
            }
            Command::Synth(a) => {
                abs_opt(&mut a.config);
                abs(&mut a.out);
            }
            Command::Label(a) => {
                abs_opt(&mut a.input);
                abs_opt(&mut a.mask);
                abs_opt(&mut a.vents);
                abs(&mut a.out);
                abs_opt(&mut a.contours);
            }
            Command::Dataset(DatasetCommand::Build(a)) => {
                abs(&mut a.config);
                abs(&mut a.out);
            }
            Command::Detect(a) => {
                abs_opt(&mut a.input);
                abs_opt(&mut a.manifest);
                abs(&mut a.out);
            }
            Command::Eval(a) => {
                abs(&mut a.manifest);
                abs(&mut a.pred);
                abs(&mut a.out);
            }
            Command::Diffmap(a) => {
                abs(&mut a.pred);
                abs(&mut a.gt);
                abs(&mut a.out);
                abs_opt(&mut a.image);
            }
            Command::Render(a) => {
                abs(&mut a.input);
                abs(&mut a.out);
            }
            Command::Replay(a) => abs(&mut a.record),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

/// Runs a parsed command and writes its run record. Returns the record path.
pub fn execute(cli: Cli, argv: Vec<String>) -> anyhow::Result<PathBuf> {
    let Cli { jobs, seed, mut command } = cli;
    let cwd = std::env::current_dir()?;
    command.absolutize(&cwd);
    if let Command::Replay(args) = &command {
        let rec = RunRecord::load(&args.record)?;
        log::info!("replaying {} from {}", rec.subcommand, args.record.display());
        let cli = Cli {
            jobs: if jobs == 0 { rec.jobs } else { jobs },
            seed: rec.seed_override,
            command: rec.command,
        };
        return execute(cli, argv);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let start = Instant::now();
    let outcome = pool.install(|| commands::dispatch(&command, seed))?;
    let record = RunRecord {
        subcommand: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        argv,
        jobs,
        seed_override: seed,
        seed: outcome.seed,
        config: outcome.config,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        summary: outcome.summary,
        duration_s: start.elapsed().as_secs_f64(),
        command,
    };
    record.save(&outcome.record_path)?;
    Ok(outcome.record_path)
}
