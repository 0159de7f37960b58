//! Command-line front end: one binary, one subcommand per pipeline stage.
//!
//! Exit status is 0 on success, 2 for configuration and usage errors and 1
//! for runtime failures. Failures print one JSON line on stderr.

mod annotate;
pub mod config;
mod data;
mod error;
mod generate;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};

pub const WORKERS_ENV: &str = "LIDARFORGE_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "lidarforge",
    version,
    about = "Synthetic labeled LiDAR datasets and scan annotation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render randomized scenes into a dataset of labeled clouds plus a manifest
    Generate(GenerateArgs),
    /// Combine unique synthetic clouds with an oversampled real pool
    Mix(MixArgs),
    /// Partition a dataset into training and validation lists
    Split(SplitArgs),
    /// Cap clouds at a point count by uniform sampling without replacement
    Downsample(DownsampleArgs),
    /// Register a scan sequence into a trajectory and a combined map
    Register(RegisterArgs),
    /// Remove the ground from a map and cluster the remaining points
    Cluster(ClusterArgs),
    /// Label every frame of a sequence from assigned clusters
    Propagate(PropagateArgs),
    /// Score predicted labels against ground truth
    Eval(EvalArgs),
    /// Write class-colored PLY point clouds
    ExportPly(ExportPlyArgs),
    /// Keep the triangles of a mesh that lie inside a box
    CropMesh(CropMeshArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Run configuration (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Number of clouds [default: output.count from the config]
    #[arg(long)]
    pub count: Option<u64>,
    /// Master seed [default: output.seed from the config, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: output.dir from the config]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: available parallelism]
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Replace existing clouds and manifest in the output directory
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Run configuration whose `mix` section supplies defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of real clouds
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Directory of synthetic clouds
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Total number of entries [default: 10000]
    #[arg(long)]
    pub total: Option<usize>,
    /// Synthetic share of the total [default: 0.5]
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output plan (JSON)
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Directory of clouds
    #[arg(long)]
    pub input: PathBuf,
    /// Number of validation clouds
    #[arg(long)]
    pub val: usize,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving train.txt and val.txt
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DownsampleArgs {
    /// Cloud file or directory of clouds
    #[arg(long)]
    pub input: PathBuf,
    /// Maximum points per cloud
    #[arg(long)]
    pub points: usize,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file, or directory when the input is a directory
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Directory of frames, registered in file-name order
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving trajectory.txt and map.lpc
    #[arg(long)]
    pub out: PathBuf,
    /// Voxel size of the coarse ICP pass and of the written map
    #[arg(long, default_value_t = 0.5)]
    pub voxel: f64,
    /// Maximum correspondence distance
    #[arg(long, default_value_t = 1.0)]
    pub max_corr: f64,
    /// Iteration cap per pass
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// Convergence threshold on the pose update
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Voxel size of the written map [default: --voxel]
    #[arg(long)]
    pub map_voxel: Option<f64>,
    /// Voxel size of the refinement pass
    #[arg(long, default_value_t = 0.2)]
    pub refine_voxel: f64,
    /// Maximum correspondence distance of the refinement pass
    #[arg(long, default_value_t = 0.3)]
    pub refine_corr: f64,
    /// Stop after the coarse pass
    #[arg(long)]
    pub no_refine: bool,
    /// Match ground points too
    #[arg(long)]
    pub keep_ground: bool,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GroundMethodArg {
    Ransac,
    ZThreshold,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Map cloud
    #[arg(long)]
    pub map: PathBuf,
    /// Output cluster set (JSON)
    #[arg(long)]
    pub out: PathBuf,
    /// Linkage distance
    #[arg(long, default_value_t = 0.5)]
    pub distance: f64,
    /// Smallest cluster kept
    #[arg(long, default_value_t = 10)]
    pub min_size: usize,
    #[arg(long, value_enum, default_value_t = GroundMethodArg::Ransac)]
    pub ground: GroundMethodArg,
    /// Height threshold for the z-threshold method and the RANSAC fallback
    #[arg(long, default_value_t = 0.2)]
    pub z_threshold: f64,
    #[arg(long, default_value_t = 200)]
    pub ransac_iters: usize,
    #[arg(long, default_value_t = 0.15)]
    pub inlier_dist: f64,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    /// Directory of frames
    #[arg(long)]
    pub frames: PathBuf,
    /// Trajectory from `register`
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Cluster set from `cluster`
    #[arg(long)]
    pub clusters: PathBuf,
    /// Lines of `cluster_id class_name`
    #[arg(long)]
    pub assignments: PathBuf,
    /// Directory receiving the labeled frames
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub radius: f64,
    /// Class for points without an assigned cluster nearby
    #[arg(long, default_value = "other")]
    pub other: String,
    /// Class table, comma separated [default: the frames' table]
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth cloud or directory
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction cloud or directory, paired with --gt by file name
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportPlyArgs {
    /// Cloud file or directory of frames
    #[arg(long)]
    pub input: PathBuf,
    /// Predictions to color by, paired like the input
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Poses moving each frame into a common frame
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Output PLY
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CropMeshArgs {
    /// Mesh file (PLY, OBJ or binary STL)
    #[arg(long)]
    pub input: PathBuf,
    /// Mesh format [default: from the extension]
    #[arg(long)]
    pub format: Option<String>,
    /// Box minimum corner x,y,z
    #[arg(
        long,
        required = true,
        value_delimiter = ',',
        value_name = "X,Y,Z",
        allow_hyphen_values = true
    )]
    pub min: Vec<f64>,
    /// Box maximum corner x,y,z
    #[arg(
        long,
        required = true,
        value_delimiter = ',',
        value_name = "X,Y,Z",
        allow_hyphen_values = true
    )]
    pub max: Vec<f64>,
    /// Output PLY mesh
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn execute<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let rendered = e.render().to_string();
            let message: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let e = CliError::Config(message.join(" ").trim_start_matches("error: ").to_string());
            let _ = writeln!(err, "{}", e.to_json_line());
            return e.exit_code();
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json_line());
            e.exit_code()
        }
    }
}

fn run(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Generate(a) => generate::run(a, out),
        Command::Mix(a) => data::mix(a, out),
        Command::Split(a) => data::split(a, out),
        Command::Downsample(a) => data::downsample(a, out),
        Command::Register(a) => annotate::register(a, out),
        Command::Cluster(a) => annotate::cluster(a, out),
        Command::Propagate(a) => annotate::propagate(a, out),
        Command::Eval(a) => data::eval(a, out),
        Command::ExportPly(a) => data::export_ply(a, out),
        Command::CropMesh(a) => data::crop_mesh(a, out),
    }
}

pub(crate) fn workers(requested: Option<usize>) -> usize {
    requested
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
