use std::fmt;
use std::path::PathBuf;
use std::sync::OnceLock;

use blobtrack::{AreaGate, Params, Pooling};
use clap::{ArgMatches, Args, Parser, Subcommand, ValueEnum};
use clap::parser::ValueSource;

fn defaults() -> &'static Params {
    static DEFAULTS: OnceLock<Params> = OnceLock::new();
    DEFAULTS.get_or_init(Params::default)
}

#[derive(Debug, Parser)]
#[command(name = "blobtrack", version, about = "Detect and track blob-filaments in mesh time series")]
pub struct Cli {
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run detection and tracking on a frame container and write result files
    Detect(DetectArgs),
    /// Write a synthetic frame container and its ground truth
    Generate(GenerateArgs),
    /// Measure strong or weak scaling over worker counts
    Bench(BenchArgs),
    /// Fit extreme-value and log-normal models to normalized densities
    Fitdist(FitArgs),
}

#[derive(Debug, Args)]
pub struct RoiArgs {
    /// Region of interest, lower r bound
    #[arg(long, allow_hyphen_values = true, requires_all = ["rmax", "zmin", "zmax"])]
    pub rmin: Option<f64>,
    /// Region of interest, upper r bound
    #[arg(long, allow_hyphen_values = true, requires = "rmin")]
    pub rmax: Option<f64>,
    /// Region of interest, lower z bound
    #[arg(long, allow_hyphen_values = true, requires = "rmin")]
    pub zmin: Option<f64>,
    /// Region of interest, upper z bound
    #[arg(long, allow_hyphen_values = true, requires = "rmin")]
    pub zmax: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub roi: RoiArgs,

    /// First time index to analyze (time 1 is the baseline frame)
    #[arg(long, default_value_t = 1)]
    pub t_start: usize,

    /// Last time index to analyze [default: last in the input]
    #[arg(long)]
    pub t_end: Option<usize>,

    /// Worker threads
    #[arg(long, env = "BLOBTRACK_WORKERS", default_value_t = 1)]
    pub workers: usize,

    /// Midpoint refinement levels applied before detection
    #[arg(long, default_value_t = 1)]
    pub refine: usize,

    /// Run on the calling thread regardless of --workers
    #[arg(long)]
    pub sequential: bool,

    /// Parameter file (TOML); flags given on the command line override it
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: ParamOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Pooled,
    PerPlane,
}

impl fmt::Display for PoolingArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

impl From<Pooling> for PoolingArg {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::Pooled => Self::Pooled,
            Pooling::PerPlane => Self::PerPlane,
        }
    }
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Pooled => Self::Pooled,
            PoolingArg::PerPlane => Self::PerPlane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AreaGateArg {
    Absolute,
    Relative,
}

impl fmt::Display for AreaGateArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

impl From<AreaGate> for AreaGateArg {
    fn from(g: AreaGate) -> Self {
        match g {
            AreaGate::Absolute => Self::Absolute,
            AreaGate::Relative => Self::Relative,
        }
    }
}

impl From<AreaGateArg> for AreaGate {
    fn from(g: AreaGateArg) -> Self {
        match g {
            AreaGateArg::Absolute => Self::Absolute,
            AreaGateArg::Relative => Self::Relative,
        }
    }
}

/// Every threshold, defaulting to the shipped parameter file.
#[derive(Debug, Args)]
pub struct ParamOverrides {
    /// Phase-1 outlier multiplier of sigma
    #[arg(long, default_value_t = defaults().detection.alpha, help_heading = "Parameters")]
    pub alpha: f64,
    /// Phase-2 outlier multiplier of sigma2
    #[arg(long, default_value_t = defaults().detection.beta, help_heading = "Parameters")]
    pub beta: f64,
    /// Absolute density floor
    #[arg(long, default_value_t = defaults().detection.min_abs_density, help_heading = "Parameters")]
    pub min_abs_density: f64,
    /// Density floor relative to mu2
    #[arg(long, default_value_t = defaults().detection.min_rel_density, help_heading = "Parameters")]
    pub min_rel_density: f64,
    /// Moments over all planes of a time step together, or per plane
    #[arg(long, value_enum, default_value_t = defaults().detection.pooling.into(), help_heading = "Parameters")]
    pub pooling: PoolingArg,
    /// Minimum blob size in vertices
    #[arg(long, default_value_t = defaults().blob.min_area, help_heading = "Parameters")]
    pub min_area: usize,
    /// Absolute lower bound of the blob median cut
    #[arg(long, default_value_t = defaults().blob.min_abs_median, help_heading = "Parameters")]
    pub min_abs_median: f64,
    /// Median cut relative to mu2
    #[arg(long, default_value_t = defaults().blob.min_rel_median, help_heading = "Parameters")]
    pub min_rel_median: f64,
    /// Cap on the relative median cut
    #[arg(long, default_value_t = defaults().blob.max_abs_median, help_heading = "Parameters")]
    pub max_abs_median: f64,
    /// Largest area change between linked blobs
    #[arg(long, default_value_t = defaults().track.max_area_change, help_heading = "Parameters")]
    pub max_area_change: f64,
    /// Area change in vertices or in percent of the previous area
    #[arg(long, value_enum, default_value_t = defaults().track.area_gate.into(), help_heading = "Parameters")]
    pub area_gate: AreaGateArg,
    /// Largest center displacement between linked blobs
    #[arg(long, default_value_t = defaults().track.max_jump, help_heading = "Parameters")]
    pub max_jump: f64,
    /// Tracks end after this many frames
    #[arg(long, default_value_t = defaults().track.max_frames, help_heading = "Parameters")]
    pub max_frames: usize,
    /// Shorter tracks are dropped
    #[arg(long, default_value_t = defaults().track.min_frames, help_heading = "Parameters")]
    pub min_frames: usize,
}

impl ParamOverrides {
    /// Applies the values that were given explicitly (flag or environment).
    pub fn apply(&self, matches: &ArgMatches, params: &mut Params) {
        let given = |id: &str| {
            matches!(
                matches.value_source(id),
                Some(ValueSource::CommandLine | ValueSource::EnvVariable)
            )
        };
        macro_rules! set {
            ($id:literal, $target:expr, $value:expr) => {
                if given($id) {
                    $target = $value;
                }
            };
        }
        set!("alpha", params.detection.alpha, self.alpha);
        set!("beta", params.detection.beta, self.beta);
        set!("min_abs_density", params.detection.min_abs_density, self.min_abs_density);
        set!("min_rel_density", params.detection.min_rel_density, self.min_rel_density);
        set!("pooling", params.detection.pooling, self.pooling.into());
        set!("min_area", params.blob.min_area, self.min_area);
        set!("min_abs_median", params.blob.min_abs_median, self.min_abs_median);
        set!("min_rel_median", params.blob.min_rel_median, self.min_rel_median);
        set!("max_abs_median", params.blob.max_abs_median, self.max_abs_median);
        set!("max_area_change", params.track.max_area_change, self.max_area_change);
        set!("area_gate", params.track.area_gate, self.area_gate.into());
        set!("max_jump", params.track.max_jump, self.max_jump);
        set!("max_frames", params.track.max_frames, self.max_frames);
        set!("min_frames", params.track.min_frames, self.min_frames);
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for output files
    #[arg(long, env = "BLOBTRACK_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Frame container (binary or text encoding)
    #[arg(long, short)]
    pub input: PathBuf,

    #[command(flatten)]
    pub run: RunArgs,

    #[command(flatten)]
    pub out: OutArgs,

    /// Prefix for the result file names
    #[arg(long, default_value = "")]
    pub prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Binary,
    Text,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of drifting bumps
    #[arg(long, default_value_t = 3)]
    pub bumps: usize,
    /// Time steps including the baseline frame
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    /// Poloidal planes per time step
    #[arg(long, default_value_t = 1)]
    pub planes: usize,
    /// Bump displacement along z per time step
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.02)]
    pub drift: f64,
    /// Relative noise standard deviation
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Grid cells per coordinate unit
    #[arg(long, default_value_t = 100.0)]
    pub resolution: f64,
    /// Gaussian bump width
    #[arg(long, default_value_t = 0.05)]
    pub width: f64,
    /// Fixed bump amplitude [default: uniform in 1.5..=3.0 per bump]
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Seconds between time steps
    #[arg(long, default_value_t = 2.5e-6)]
    pub dt: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synth: SynthArgs,

    /// Payload encoding
    #[arg(long, value_enum, default_value_t = EncodingArg::Binary)]
    pub encoding: EncodingArg,

    #[command(flatten)]
    pub out: OutArgs,

    /// Base name of the container and ground-truth files
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strong,
    Weak,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Frame container; without it a synthetic input is generated
    #[arg(long, short)]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    pub synth: SynthArgs,

    #[command(flatten)]
    pub run: RunArgs,

    /// Worker counts to sweep; the first is the reference
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub sweep: Vec<usize>,

    /// Fixed total frames or fixed frames per worker
    #[arg(long, value_enum, default_value_t = ModeArg::Strong)]
    pub mode: ModeArg,

    /// Frames per worker in weak mode
    #[arg(long, default_value_t = 32)]
    pub frames_per_worker: usize,

    /// Runs per worker count; the median time is reported
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Frame container to sample normalized densities from
    #[arg(long, short, required_unless_present = "values", conflicts_with = "values")]
    pub input: Option<PathBuf>,

    /// Plain text file of samples (whitespace or comma separated)
    #[arg(long)]
    pub values: Option<PathBuf>,

    /// Time index to sample
    #[arg(long, default_value_t = 2)]
    pub time: usize,

    /// Plane to sample
    #[arg(long, default_value_t = 0)]
    pub plane: usize,

    #[command(flatten)]
    pub roi: RoiArgs,
}
