use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvdepth::augmentation::AugmentationConfig;
use mvdepth::dataset_io::KeyValues;
use serde::Serialize;

pub const DEFAULT_D_MIN: f64 = 0.5;
pub const DEFAULT_D_MAX: f64 = 50.0;
pub const DEFAULT_ND: usize = 64;
pub const DEFAULT_SEED: u64 = 0;

const PRECEDENCE: &str = "\
Settings resolve as: command-line flags, then keys in the --config file, then
built-in defaults. Config files hold one `key value` pair per line; recognized
keys are dmin, dmax, nd, estimator, checkpoint, angle_deg, baseline_m,
threads, seed and the augmentation keys (depth_scale_min, depth_scale_max,
spatial_scale_min, spatial_scale_max, flip_probability, horizontal_flip,
vertical_flip, noise_sigma, brightness, contrast, color).

Exit status: 0 on success, 1 on usage errors, 2 on data errors or a failed
gradient check.";

#[derive(Debug, Parser)]
#[command(name = "mvdepth", version, about = "Multiview depth from posed image sequences", after_help = PRECEDENCE)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Key-value file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Nearest hypothesis depth in meters [default: 0.5].
    #[arg(long, global = true)]
    pub dmin: Option<f64>,
    /// Farthest hypothesis depth in meters [default: 50].
    #[arg(long, global = true)]
    pub dmax: Option<f64>,
    /// Number of inverse-depth hypotheses [default: 64].
    #[arg(long, global = true)]
    pub nd: Option<usize>,
    /// Depth readout [default: classical].
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorKind>,
    /// Network checkpoint for `--estimator network`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// View-angle threshold for measurement-frame selection [default: 15].
    #[arg(long, global = true)]
    pub angle_deg: Option<f64>,
    /// Baseline threshold for measurement-frame selection [default: 0.3].
    #[arg(long, global = true)]
    pub baseline_m: Option<f64>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true, env = "MVDEPTH_THREADS")]
    pub threads: Option<usize>,
    /// Seed for every random draw [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Print wall-clock timings to stderr.
    #[arg(long, global = true)]
    pub timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cost volume and dump it.
    Volume(FrameSelection),
    /// Estimate depth for one reference frame.
    Depth(FrameSelection),
    /// Run keyframe selection and depth estimation over a whole sequence.
    Map {
        /// TUM-layout sequence directory.
        sequence: PathBuf,
    },
    /// Score predicted depth against ground truth.
    Eval {
        /// Predicted depth map (PFM or 16-bit PNG) or a directory of them.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth depth map or directory, matched by file stem.
        #[arg(long)]
        gt: PathBuf,
        /// Raw units per meter in 16-bit PNG depth.
        #[arg(long, default_value_t = mvdepth::dataset_io::TUM_DEPTH_SCALE)]
        png_scale: f64,
    },
    /// Train a scaled-down network on rendered scenes.
    TrainToy(TrainArgs),
    /// Render a synthetic scene as a TUM-layout directory.
    Synth(SynthArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct FrameSelection {
    /// TUM-layout sequence directory.
    pub sequence: PathBuf,
    /// Index of the reference frame in the associated sequence.
    #[arg(long)]
    pub reference: usize,
    /// Comma-separated indices of measurement frames.
    #[arg(long, value_delimiter = ',', required = true)]
    pub measurements: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    /// Number of rendered training pairs.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    /// Channel widths are divided by this.
    #[arg(long, default_value_t = 8)]
    pub width_divisor: u32,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    /// Apply geometric and photometric augmentation to each pair.
    #[arg(long)]
    pub augment: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Desk,
    Plane,
    Tilted,
    Repetitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> nalgebra::Vector3<f64> {
        match self {
            Axis::X => nalgebra::Vector3::x(),
            Axis::Y => nalgebra::Vector3::y(),
            Axis::Z => nalgebra::Vector3::z(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::Desk)]
    pub scene: SceneKind,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    /// Camera translation between consecutive frames.
    #[arg(long, default_value_t = 0.1)]
    pub step_m: f64,
    /// Direction of camera travel (x right, y down, z forward).
    #[arg(long, value_enum, default_value_t = Axis::X)]
    pub axis: Axis,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Plane depth for the single-plane scenes.
    #[arg(long, default_value_t = 2.0)]
    pub plane_depth: f64,
    #[arg(long, default_value_t = 30.0)]
    pub rate_hz: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub width_divisor: u32,
    /// Square input side; must be a multiple of 16.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Classical,
    Network,
}

/// Settings after applying flags over config over defaults.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub d_min: f64,
    pub d_max: f64,
    pub n_depth_samples: usize,
    pub estimator: EstimatorKind,
    pub checkpoint: Option<PathBuf>,
    pub angle_deg: f64,
    pub baseline_m: f64,
    pub threads: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub augmentation: AugmentationConfig,
}

const CONFIG_KEYS: &[&str] = &[
    "dmin",
    "dmax",
    "nd",
    "estimator",
    "checkpoint",
    "angle_deg",
    "baseline_m",
    "threads",
    "seed",
    "depth_scale_min",
    "depth_scale_max",
    "spatial_scale_min",
    "spatial_scale_max",
    "flip_probability",
    "horizontal_flip",
    "vertical_flip",
    "noise_sigma",
    "brightness",
    "contrast",
    "color",
];

fn from_config<T: std::str::FromStr>(kv: Option<&KeyValues>, key: &str) -> Result<Option<T>, String> {
    match kv {
        Some(kv) => kv.get(key).map_err(|e| e.to_string()),
        None => Ok(None),
    }
}

impl GlobalArgs {
    /// Resolves and validates every setting; errors name the offending field.
    pub fn resolve(&self) -> Result<Resolved, String> {
        let kv = self
            .config
            .as_ref()
            .map(|p| KeyValues::read(p).map_err(|e| format!("--config: {e}")))
            .transpose()?;
        let kv = kv.as_ref();
        if let Some(unknown) = kv.and_then(|kv| kv.keys().find(|k| !CONFIG_KEYS.contains(k))) {
            return Err(format!("--config: unknown key `{unknown}`"));
        }
        let estimator = match self.estimator {
            Some(e) => e,
            None => match kv.and_then(|kv| kv.get_str("estimator")) {
                Some(s) => EstimatorKind::from_str(s, true).map_err(|_| format!("estimator: unknown value `{s}`"))?,
                None => EstimatorKind::Classical,
            },
        };
        let checkpoint = self
            .checkpoint
            .clone()
            .or_else(|| kv.and_then(|kv| kv.get_str("checkpoint")).map(PathBuf::from));
        let threads = match self.threads.or(from_config(kv, "threads")?) {
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let mut augmentation = match kv {
            Some(kv) => AugmentationConfig::from_key_values(kv).map_err(|e| format!("augmentation: {e}"))?,
            None => AugmentationConfig::default(),
        };
        let seed = self.seed.or(from_config(kv, "seed")?).unwrap_or(DEFAULT_SEED);
        augmentation.seed = seed;
        let r = Resolved {
            d_min: self.dmin.or(from_config(kv, "dmin")?).unwrap_or(DEFAULT_D_MIN),
            d_max: self.dmax.or(from_config(kv, "dmax")?).unwrap_or(DEFAULT_D_MAX),
            n_depth_samples: self.nd.or(from_config(kv, "nd")?).unwrap_or(DEFAULT_ND),
            estimator,
            checkpoint,
            angle_deg: self
                .angle_deg
                .or(from_config(kv, "angle_deg")?)
                .unwrap_or(mvdepth::sequence_mapper::DEFAULT_ANGLE_DEG),
            baseline_m: self
                .baseline_m
                .or(from_config(kv, "baseline_m")?)
                .unwrap_or(mvdepth::sequence_mapper::DEFAULT_BASELINE_M),
            threads,
            seed,
            out: self.out.clone(),
            augmentation,
        };
        r.validate()?;
        Ok(r)
    }
}

impl Resolved {
    fn validate(&self) -> Result<(), String> {
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return Err(format!("dmin: must be positive, got {}", self.d_min));
        }
        if !(self.d_max > self.d_min && self.d_max.is_finite()) {
            return Err(format!("dmax: must exceed dmin ({}), got {}", self.d_min, self.d_max));
        }
        if self.n_depth_samples < 2 {
            return Err(format!("nd: need at least 2 hypotheses, got {}", self.n_depth_samples));
        }
        if !(self.angle_deg >= 0.0 && self.angle_deg.is_finite()) {
            return Err(format!("angle-deg: must be non-negative, got {}", self.angle_deg));
        }
        if !(self.baseline_m >= 0.0 && self.baseline_m.is_finite()) {
            return Err(format!("baseline-m: must be non-negative, got {}", self.baseline_m));
        }
        if self.threads == 0 {
            return Err("threads: must be at least 1".into());
        }
        if self.estimator == EstimatorKind::Network && self.checkpoint.is_none() {
            return Err("checkpoint: required with --estimator network".into());
        }
        Ok(())
    }
}
