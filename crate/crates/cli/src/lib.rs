//! Command-line driver: sampling, fitting, auto-decoder training, latent fitting,
//! meshing, evaluation and the 2D demo.
//!
//! Every tunable is resolved as flag, then `--config` file (`key = value` lines using
//! the flag names), then built-in default. Each artifact gets a JSON manifest next
//! to it (`<artifact>.manifest.json`, or `manifest.json` in an output directory).

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_demo2d, cmd_eval, cmd_fit, cmd_fit_latent, cmd_mesh, cmd_sample, cmd_train_autodecoder,
};
pub use manifest::{manifest_path, sha256_file, RunManifest};
pub use settings::Settings;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] gdf_core::Error),
}

impl CliError {
    /// 3 for numerical failures, 2 for everything caused by usage or input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gdf",
    version,
    about = "Gradient distance fields for open surfaces"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Random seed for sampling, initialization and batching [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` file supplying defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for sampling, grid evaluation and metrics [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a mesh and write a GDFS cache of query points with field vectors
    Sample(SampleArgs),
    /// Fit one network to a sample cache (GDF, UDF or CSP output)
    #[command(alias = "fit-single")]
    Fit(FitArgs),
    /// Train one decoder with a latent code per sample cache in a directory
    TrainAutodecoder(TrainAutodecoderArgs),
    /// Fit a latent code of an auto-decoder to a point cloud
    FitLatent(FitLatentArgs),
    /// Extract a mesh from a checkpoint or a stored field grid
    Mesh(MeshArgs),
    /// Compare a mesh (or a checkpoint) against a ground-truth mesh.
    ///
    /// CSV columns: method,shape,cd_x1e4,nc_pct,dist_err,grad_err,n_samples,seed.
    /// dist_err and grad_err are filled only when evaluating a checkpoint.
    Eval(EvalArgs),
    /// Fit UDF and GDF networks to a 2D contour and write images plus report.csv.
    ///
    /// CSV columns: method,coverage,contour_pixels,flip_product,probe_min_px,final_loss.
    Demo2d(Demo2dArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// Input OBJ or PLY mesh
    pub mesh: PathBuf,
    /// Output sample cache
    #[arg(short, long)]
    pub out: PathBuf,
    /// Near-surface samples [default: 400000]
    #[arg(long)]
    pub near: Option<usize>,
    /// Uniform volume samples [default: 20000]
    #[arg(long)]
    pub uniform: Option<usize>,
    /// Half extent of the uniform sampling cube [default: 0.55]
    #[arg(long)]
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Hidden layers [default: 8]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Units per hidden layer [default: 512]
    #[arg(long)]
    pub width: Option<usize>,
    /// Training iterations [default: 30000]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Samples per iteration [default: 32000]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Base learning rate [default: 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Output representation: gdf, udf or csp [default: gdf]
    #[arg(long)]
    pub repr: Option<String>,
    /// Loss: l1 or composite (gdf only) [default: l1]
    #[arg(long)]
    pub loss: Option<String>,
    /// Composite weight of the vector term [default: 100]
    #[arg(long)]
    pub lambda_adf: Option<f64>,
    /// Composite weight of the direction term [default: 4]
    #[arg(long)]
    pub lambda_grad: Option<f64>,
    /// Composite weight of the distance term [default: 50]
    #[arg(long)]
    pub lambda_udf: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// GDFS sample cache
    pub samples: PathBuf,
    /// Output checkpoint
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainAutodecoderArgs {
    /// Directory of `.gdfs` caches; shape `i` is the `i`-th file by name
    pub samples: PathBuf,
    /// Output checkpoint
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    /// Latent code length [default: 256]
    #[arg(long)]
    pub latent: Option<usize>,
    /// Weight of a squared-norm penalty on codes [default: 0]
    #[arg(long)]
    pub code_reg: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitLatentArgs {
    /// Point cloud as OBJ/PLY; meshes are sampled on their surface
    pub cloud: PathBuf,
    /// Trained auto-decoder checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output checkpoint holding the fitted code as its only latent
    #[arg(short, long)]
    pub out: PathBuf,
    /// Points taken from the cloud [default: 10000]
    #[arg(long)]
    pub points: Option<usize>,
    /// Optimization iterations [default: 800]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Queries per iteration [default: 4096]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Pseudo-supervised query points [default: 50000]
    #[arg(long)]
    pub queries: Option<usize>,
    /// Learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Also draw 5% uniform queries in a cube of this half extent
    #[arg(long)]
    pub uniform_extent: Option<f64>,
    /// Ground-truth mesh; when given, the fit is meshed and a CSV row appended to --report
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// CSV file receiving evaluation rows
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Lattice cells per axis for the evaluation mesh [default: 128]
    #[arg(long)]
    pub res: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MeshArgs {
    /// Checkpoint (.gdfn) or field grid (.gdfg)
    pub input: PathBuf,
    /// Output OBJ or PLY
    #[arg(short, long)]
    pub out: PathBuf,
    /// Lattice cells per axis [default: 128]
    #[arg(long)]
    pub res: Option<usize>,
    /// Half extent of the meshing cube in normalized space [default: 0.55]
    #[arg(long)]
    pub extent: Option<f64>,
    /// Latent code index for auto-decoder checkpoints [default: 0]
    #[arg(long)]
    pub code: Option<usize>,
    /// Cells farther than this many cell diagonals are skipped [default: 3]
    #[arg(long)]
    pub far_cutoff: Option<f64>,
    /// Also store the evaluated field grid here
    #[arg(long)]
    pub save_grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted mesh (OBJ/PLY) or checkpoint (.gdfn)
    pub pred: PathBuf,
    /// Ground-truth mesh
    #[arg(long)]
    pub gt: PathBuf,
    /// CSV file; created with a header, or appended to
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Method label [default: input file stem, or the representation of a checkpoint]
    #[arg(long)]
    pub method: Option<String>,
    /// Shape label [default: ground-truth file stem]
    #[arg(long)]
    pub shape: Option<String>,
    /// Surface samples per mesh [default: 30000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use unsquared point distances in the Chamfer distance
    #[arg(long)]
    pub linear: bool,
    /// Lattice cells per axis when meshing a checkpoint [default: 128]
    #[arg(long)]
    pub res: Option<usize>,
    /// Lattice cells per axis for the near-surface field errors [default: 64]
    #[arg(long)]
    pub field_res: Option<usize>,
    /// Near-surface band in cells for the field errors [default: 1]
    #[arg(long)]
    pub band: Option<f64>,
    /// Latent code index for auto-decoder checkpoints [default: 0]
    #[arg(long)]
    pub code: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct Demo2dArgs {
    /// Contour CSV (x,y per line, blank line between polylines) [default: bundled bunny]
    pub contour: Option<PathBuf>,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
    /// Raster size in pixels [default: 256]
    #[arg(long)]
    pub image: Option<usize>,
    /// Hidden layers [default: 8]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Units per hidden layer [default: 256]
    #[arg(long)]
    pub width: Option<usize>,
    /// Training iterations [default: 10000]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Samples per iteration [default: 4096]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Training samples [default: 20000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Learning rate [default: 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,
}

/// Runs a parsed command inside a thread pool sized by `--threads`.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    let mut settings = Settings::load(cli.global.config.as_deref())?;
    pool.install(|| commands::dispatch(&cli.command, &cli.global, &mut settings))?;
    for key in settings.unused() {
        eprintln!("warning: config key '{key}' is not used by this command");
    }
    Ok(())
}

/// Parses `args` (program name first) and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
