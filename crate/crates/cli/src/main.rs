//! `svx`: batch front-end for supervoxel seed refinement.

mod commands;
mod config;
mod overlay;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svx_core::SvxError;

#[derive(Debug, Parser)]
#[command(name = "svx", version, about = "Supervoxel refinement of segmentation seeds")]
pub struct Cli {
    /// Print a machine-readable JSON result on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON file whose keys mirror command-line flags; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition a volume into SLIC supervoxels.
    Slic(SlicArgs),
    /// Per-supervoxel feature vectors as CSV.
    Features(FeaturesArgs),
    /// Region adjacency graph edges as JSON lines.
    Rag(RagArgs),
    /// Refine whole-tumour and tumour-core seed masks.
    Refine(RefineArgs),
    /// Pseudo-label batch schedule.
    Schedule(ScheduleArgs),
    /// Compare a predicted mask with ground truth.
    Metrics(MetricsArgs),
    /// Generate a synthetic four-channel case.
    Phantom(PhantomArgs),
    /// Phantom benchmark: corrupt, refine and score a batch of cases.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SlicParamArgs {
    #[arg(long, default_value_t = 350)]
    pub n_segments: usize,
    #[arg(long, default_value_t = 0.01)]
    pub compactness: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SlicArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Clustering channels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub channels: Vec<usize>,
    #[command(flatten)]
    pub slic: SlicParamArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub supervoxels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub channels: Vec<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RagArgs {
    #[arg(long)]
    pub supervoxels: PathBuf,
    /// JSON-lines destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Multi-channel volume.
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long, default_value = "T1=0,T1Gd=1,T2=2,FLAIR=3")]
    pub roles: String,
    #[arg(long)]
    pub seed_wt: PathBuf,
    #[arg(long)]
    pub seed_tc: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub sim0: f64,
    #[arg(long, default_value_t = 30)]
    pub nc: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    pub tau: String,
    #[arg(long, default_value_t = 0.5)]
    pub fit_threshold: f64,
    /// Feature channels; (T1Gd, T2, FLAIR) when omitted.
    #[arg(long, value_delimiter = ',')]
    pub feature_channels: Option<Vec<usize>>,
    #[command(flatten)]
    pub slic: SlicParamArgs,
    #[arg(long)]
    pub out_wt: PathBuf,
    #[arg(long)]
    pub out_tc: PathBuf,
    /// Merge records as a JSON array.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 3.0)]
    pub alpha_f: f64,
    #[arg(long, default_value_t = 200)]
    pub t1: u32,
    #[arg(long, default_value_t = 700)]
    pub t2: u32,
    #[arg(long, default_value_t = 250)]
    pub nt: u32,
    #[arg(long, default_value_t = 1000)]
    pub epochs: u32,
    #[arg(long, default_value_t = 200)]
    pub refresh_period: u32,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// JSON report destination.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomGenArgs {
    /// Grid size as X,Y,Z.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "64,64,64")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub blobs: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub bias: f64,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub phantom: PhantomGenArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub phantom: PhantomGenArgs,
    /// Erosion radius applied to the ground truth.
    #[arg(long, default_value_t = 2.0)]
    pub erosion: f64,
    /// Flip probability for boundary voxels after erosion.
    #[arg(long, default_value_t = 0.1)]
    pub boundary_noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sim0: f64,
    #[arg(long, default_value_t = 30)]
    pub nc: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_segments: usize,
    #[arg(long, default_value_t = 1.0)]
    pub compactness: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Writes summary.json and overlay PNGs here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Failure classes mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl From<SvxError> for Failure {
    fn from(e: SvxError) -> Self {
        match e {
            SvxError::Param(_) | SvxError::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SVX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SVX_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let Some(cli) = config::parse(argv)? else {
        return Ok(());
    };
    init_threads()?;
    commands::dispatch(&cli)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Data(msg)) = &f;
            eprintln!("svx: {}", msg.lines().next().unwrap_or_default());
            ExitCode::from(f.code())
        }
    }
}
