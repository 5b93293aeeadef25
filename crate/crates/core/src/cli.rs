//! Command line driver. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::degradation::{apply_noise, NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate, Reference};
use crate::resample::{self, Regularizer, ResampleConfig};
use crate::shapes::{sample_shape, Sampler, ShapeKind, ShapeSpec};
use crate::training::{self, Optimizer, TrainConfig, TrainMode};
use crate::PointCloud;

#[derive(Parser, Debug)]
#[command(name = "gradfield", version, about = "Point cloud denoising and upsampling with a learned gradient field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic shape.
    Gen(GenArgs),
    /// Add noise to a point cloud.
    Corrupt(CorruptArgs),
    /// Train a gradient field on a directory of clean clouds.
    Train(TrainArgs),
    /// Denoise a cloud by gradient ascent.
    Denoise(DenoiseArgs),
    /// Upsample a sparse cloud.
    Upsample(UpsampleArgs),
    /// Compare a prediction with ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// sphere, torus, box or capsule, optionally with parameters, e.g. torus:1,0.3
    #[arg(long)]
    shape: ShapeKind,
    #[arg(long, default_value_t = 2048)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    sampler: SamplerArg,
    #[arg(long)]
    out: PathBuf,
    /// Also write a triangle mesh of the shape (PLY).
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Uniform,
    Stratified,
}

#[derive(Args, Debug)]
struct CorruptArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// gaussian, laplace, discrete, aniso, unidir or uniform
    #[arg(long, default_value = "gaussian")]
    noise: NoiseKind,
    /// Noise scale relative to the bounding-sphere radius.
    #[arg(long, default_value_t = 0.02)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Denoise,
    Upsample,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory of clean .xyz / .ply clouds.
    #[arg(long)]
    shapes_dir: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 512)]
    patch: usize,
    #[arg(long, default_value_t = 0.005)]
    noise_lo: f64,
    #[arg(long, default_value_t = 0.03)]
    noise_hi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Denoise)]
    mode: ModeArg,
    /// Upsampling ratio used by `--mode upsample`.
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    #[arg(long)]
    ckpt: PathBuf,
    /// Write the per-iteration loss here.
    #[arg(long)]
    loss_trace: Option<PathBuf>,
    /// Print the running loss every this many iterations (0 disables).
    #[arg(long, default_value_t = 500)]
    log_every: usize,
}

#[derive(Args, Debug)]
struct ResampleArgs {
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0.15)]
    alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    decay: f64,
    /// none, glr or rglr
    #[arg(long, default_value = "none")]
    reg: Regularizer,
    #[arg(long, default_value_t = crate::graph::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = crate::graph::DEFAULT_K)]
    graph_k: usize,
}

impl ResampleArgs {
    fn config(&self) -> ResampleConfig {
        ResampleConfig {
            alpha1: self.alpha,
            decay: self.decay,
            steps: self.steps,
            regularizer: self.reg,
            lambda: self.lambda,
            graph_k: self.graph_k,
        }
    }
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    resample: ResampleArgs,
    #[arg(long)]
    out: PathBuf,
    /// Write every J-th intermediate cloud next to the output.
    #[arg(long)]
    dump_every: Option<usize>,
}

#[derive(Args, Debug)]
struct UpsampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    /// Std of the initial copies relative to the bounding-sphere radius.
    #[arg(long, default_value_t = 0.02)]
    init_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    resample: ResampleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Reference mesh (PLY) for the point-to-mesh distance.
    #[arg(long, conflicts_with = "surface")]
    mesh: Option<PathBuf>,
    /// Analytic reference surface in the ground truth's frame, e.g. sphere:1.
    #[arg(long)]
    surface: Option<ShapeKind>,
}

/// Run with the process arguments.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Run with explicit arguments (the first is the program name).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Train(a) => train(a),
        Command::Denoise(a) => denoise(a),
        Command::Upsample(a) => upsample(a),
        Command::Eval(a) => eval(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = ShapeSpec {
        kind: a.shape,
        points: a.points,
        sampler: match a.sampler {
            SamplerArg::Uniform => Sampler::UniformArea,
            SamplerArg::Stratified => Sampler::Stratified,
        },
        seed: a.seed,
    };
    let shape = sample_shape(&spec, a.mesh.is_some())?;
    io::write_points(&a.out, &shape.cloud)?;
    if let (Some(path), Some(mesh)) = (a.mesh, shape.mesh) {
        io::write_ply(&path, mesh.vertices(), Some(mesh.faces()))?;
    }
    Ok(())
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    let cloud = io::read_points(&a.input)?;
    let noisy = apply_noise(&cloud, &NoiseSpec::new(a.noise, a.level, a.seed))?;
    io::write_points(&a.out, &noisy)
}

fn training_clouds(dir: &Path) -> Result<Vec<PointCloud>> {
    let entries = std::fs::read_dir(dir).map_err(io::io_error(dir))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(io::io_error(dir))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("xyz" | "ply")) {
            paths.push(p);
        }
    }
    // directory order is platform dependent
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid_input(format!("{}: no .xyz or .ply files", dir.display())));
    }
    paths.iter().map(|p| io::read_points(p)).collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let clouds = training_clouds(&a.shapes_dir)?;
    let cfg = TrainConfig {
        lr: a.lr,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        iterations: a.iters,
        patch_size: a.patch,
        noise_lo: a.noise_lo,
        noise_hi: a.noise_hi,
        mode: match a.mode {
            ModeArg::Denoise => TrainMode::Denoise,
            ModeArg::Upsample => TrainMode::Upsample { ratio: a.ratio },
        },
        seed: a.seed,
        ..TrainConfig::default()
    };
    let mut window = 0.0;
    let out = training::train_with(&clouds, &cfg, None, |it, loss| {
        window += loss;
        if a.log_every > 0 && (it + 1) % a.log_every == 0 {
            eprintln!("iter {:>7}  loss {:.6e}", it + 1, window / a.log_every as f64);
            window = 0.0;
        }
    })?;
    io::save_checkpoint(&a.ckpt, &out.model)?;
    if let Some(p) = a.loss_trace {
        training::write_loss_trace(&p, &out.losses)?;
    }
    Ok(())
}

/// `out.xyz` → `out.step010.xyz`.
fn dump_path(out: &Path, step: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("xyz");
    out.with_file_name(format!("{stem}.step{step:03}.{ext}"))
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let noisy = io::read_points(&a.input)?;
    let model = io::load_checkpoint(&a.ckpt)?;
    let cfg = a.resample.config();
    let every = a.dump_every.filter(|&j| j > 0);
    let mut dump_err = None;
    let out = resample::denoise_with(&model, &noisy, &cfg, |t, pts| {
        if let Some(j) = every {
            if t % j == 0 && dump_err.is_none() {
                let written = PointCloud::new(pts.to_vec()).and_then(|c| io::write_points(&dump_path(&a.out, t), &c));
                dump_err = written.err();
            }
        }
    })?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    io::write_points(&a.out, &out.cloud)
}

fn upsample(a: UpsampleArgs) -> Result<()> {
    let sparse = io::read_points(&a.input)?;
    let model = io::load_checkpoint(&a.ckpt)?;
    let dense = resample::upsample(&model, &sparse, a.ratio, a.init_sigma, a.seed, &a.resample.config())?;
    io::write_points(&a.out, &dense)
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = io::read_points(&a.pred)?;
    let gt = io::read_points(&a.gt)?;
    let mesh = a.mesh.as_deref().map(io::read_ply_mesh).transpose()?;
    let surface = a.surface.map(|k| k.surface());
    let reference = match (&mesh, &surface) {
        (Some(m), _) => Reference::Mesh(m),
        (None, Some(s)) => Reference::Surface(s),
        (None, None) => Reference::None,
    };
    let e = evaluate(&pred, &gt, reference)?;
    print!("{}", e.table());
    print!("{}", e.lines());
    Ok(())
}
