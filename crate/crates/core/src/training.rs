//! Supervised training of the gradient field.
//!
//! The target at a query `x` is `s(x) = NN(x, Y) − x`, the offset to the
//! nearest clean point. Each iteration draws one patch, degrades it, queries
//! the field around the degraded points and regresses `g` onto `s`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{sgd_step, zero_grad, Adam, Tape, Tensor};
use crate::degradation::{apply_noise_absolute, naive_upsample_absolute, NoiseKind};
use crate::error::{Error, Result};
use crate::field::{self, ContextFeatures, FieldConfig, GradientFieldModel, Mode};
use crate::geometry::{farthest_point_sample, patch_around, sub, Point3, PointCloud, SpatialIndex};
use crate::rng;

/// Which (context, query, target) wiring a batch uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Context = degraded patch, queries around it, targets on the clean cloud.
    Denoise,
    /// Context = sparse clean subset of the patch (farthest point sampled,
    /// `1/ratio` of it), queries = its naive upsampling, targets on the
    /// dense clean cloud.
    Upsample { ratio: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub field: FieldConfig,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub iterations: usize,
    pub patch_size: usize,
    pub queries_per_point: usize,
    /// Query jitter standard deviation as a fraction of the radius `r`.
    pub jitter: f64,
    /// Noise (or, for upsampling, init) std band, relative to the unit-sphere
    /// normalized cloud.
    pub noise_lo: f64,
    pub noise_hi: f64,
    pub mode: TrainMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            field: FieldConfig::default(),
            lr: 5e-4,
            optimizer: Optimizer::Adam,
            iterations: 20_000,
            patch_size: 1024,
            queries_per_point: 4,
            jitter: 1.0 / 3.0,
            noise_lo: 0.005,
            noise_hi: 0.03,
            mode: TrainMode::Denoise,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.patch_size > self.field.k_feat
            && self.queries_per_point >= 1
            && self.jitter >= 0.0
            && self.noise_lo >= 0.0
            && self.noise_hi >= self.noise_lo
            && self.noise_hi.is_finite();
        if !ok {
            return Err(Error::invalid_arg(format!("invalid training configuration {self:?}")));
        }
        if let TrainMode::Upsample { ratio } = self.mode {
            if ratio < 2 || self.patch_size / ratio <= self.field.k_feat {
                return Err(Error::invalid_arg(format!(
                    "upsampling ratio {ratio} leaves too few context points in a {}-point patch",
                    self.patch_size
                )));
            }
        }
        Ok(())
    }
}

/// `NN(x, Y) − x`, ties to the smallest index.
pub fn target_gradient(x: Point3, y: &PointCloud) -> Result<Point3> {
    if y.is_empty() {
        return Err(Error::invalid_arg("target cloud is empty"));
    }
    // A single query does not amortize a tree; scan directly.
    let mut best = (f64::INFINITY, 0usize);
    for (i, p) in y.points().iter().enumerate() {
        let d = crate::geometry::dist2(*p, x);
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(sub(y.points()[best.1], x))
}

/// [`target_gradient`] for many queries against a prebuilt index.
pub fn target_gradients(xs: &[Point3], y: &SpatialIndex) -> Vec<Point3> {
    xs.iter().map(|&x| sub(y.points()[y.nearest(x).index], x)).collect()
}

/// Every point of `x` followed by `queries_per_point − 1` isotropic Gaussian
/// jitters of standard deviation `std`.
pub fn sample_queries<R: Rng + ?Sized>(
    x: &[Point3],
    queries_per_point: usize,
    std: f64,
    rng: &mut R,
) -> Vec<Point3> {
    let mut out = Vec::with_capacity(x.len() * queries_per_point);
    for &p in x {
        out.push(p);
        for _ in 1..queries_per_point {
            let mut q = p;
            for c in &mut q {
                let n: f64 = StandardNormal.sample(rng);
                *c += std * n;
            }
            out.push(q);
        }
    }
    out
}

/// Mean over queries of `‖s(x) − g(x)‖²`.
pub fn loss(model: &GradientFieldModel, ctx: &ContextFeatures, queries: &[Point3], y: &PointCloud) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::invalid_arg("no queries"));
    }
    let g = field::estimate_gradients(model, queries, ctx)?;
    let index = SpatialIndex::build(y.points().to_vec());
    let s = target_gradients(queries, &index);
    let total: f64 = g
        .iter()
        .zip(&s)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(total / queries.len() as f64)
}

/// Clean training clouds, normalized into the unit sphere and indexed.
pub struct Dataset {
    clouds: Vec<SpatialIndex>,
}

impl Dataset {
    pub fn new(clouds: &[PointCloud]) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::invalid_arg("training needs at least one cloud"));
        }
        let clouds = clouds
            .iter()
            .map(|c| Ok(SpatialIndex::build(c.normalize_unit_sphere()?.into_points())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { clouds })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub context: Vec<Point3>,
    pub queries: Vec<Point3>,
    pub targets: Vec<Point3>,
    pub noise: f64,
}

/// The batch of iteration `iteration`; a pure function of `(seed, iteration)`.
pub fn sample_batch(data: &Dataset, cfg: &TrainConfig, iteration: u64) -> Result<Batch> {
    let mut r = rng::stream(cfg.seed, iteration);
    let clean = &data.clouds[r.random_range(0..data.clouds.len())];
    let size = cfg.patch_size.min(clean.len());
    let seed_point = r.random_range(0..clean.len());
    let patch = patch_around(clean, seed_point, size)?.cloud;
    let noise = if cfg.noise_hi > cfg.noise_lo {
        r.random_range(cfg.noise_lo..cfg.noise_hi)
    } else {
        cfg.noise_lo
    };
    let sub_seed = r.random::<u64>();
    let (context, queries) = match cfg.mode {
        TrainMode::Denoise => {
            let noisy = apply_noise_absolute(&patch, NoiseKind::IsotropicGaussian, noise, sub_seed)?;
            let context = noisy.into_points();
            let radius = field::radius_for(&cfg.field, &context);
            let queries = sample_queries(&context, cfg.queries_per_point, cfg.jitter * radius, &mut r);
            (context, queries)
        }
        TrainMode::Upsample { ratio } => {
            let picked = farthest_point_sample(&patch, size / ratio)?;
            let sparse = PointCloud::new(picked.iter().map(|&i| patch.points()[i]).collect())?;
            let queries = naive_upsample_absolute(&sparse, ratio, noise, sub_seed)?.into_points();
            (sparse.into_points(), queries)
        }
    };
    let targets = target_gradients(&queries, clean);
    Ok(Batch {
        context,
        queries,
        targets,
        noise,
    })
}

/// Loss of `batch`; with `accumulate`, its parameter gradients are added to
/// the model's gradient buffers.
pub fn batch_loss(model: &mut GradientFieldModel, batch: &Batch, accumulate: bool) -> Result<f64> {
    let mode = if accumulate { Mode::Train } else { Mode::Inference };
    let mut tape = Tape::new();
    let out = field::forward(&mut tape, model, mode, &batch.context, &batch.queries, None)?;
    let target = tape.constant(Tensor::from_rows(&batch.targets));
    let l = tape.mse(out.gradient, target)?;
    let value = tape.value(l).item();
    if accumulate {
        tape.backward(l, model.params_mut())?;
    }
    Ok(value)
}

pub struct TrainOutput {
    pub model: GradientFieldModel,
    /// Loss of every iteration, before that iteration's update.
    pub losses: Vec<f64>,
}

/// Train a freshly initialized model.
pub fn train(clouds: &[PointCloud], cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(clouds, cfg, None, |_, _| {})
}

/// Train `init` (or a fresh model when `None`), calling `progress(iteration,
/// loss)` after every step.
pub fn train_with(
    clouds: &[PointCloud],
    cfg: &TrainConfig,
    init: Option<GradientFieldModel>,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = Dataset::new(clouds)?;
    let mut model = match init {
        Some(m) => m,
        None => GradientFieldModel::new(cfg.field.clone(), rng::derive_seed(cfg.seed, u64::MAX))?,
    };
    if model.config() != &cfg.field {
        return Err(Error::invalid_arg("initial model does not match the configured architecture"));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.iterations);
    zero_grad(model.params_mut());
    for it in 0..cfg.iterations {
        let batch = sample_batch(&data, cfg, it as u64)?;
        let l = batch_loss(&mut model, &batch, true)?;
        if !l.is_finite() {
            return Err(Error::NumericalFailure {
                iterations: it,
                residual: l,
            });
        }
        match cfg.optimizer {
            Optimizer::Sgd => sgd_step(model.params_mut(), cfg.lr),
            Optimizer::Adam => adam.step(model.params_mut()),
        }
        zero_grad(model.params_mut());
        losses.push(l);
        progress(it, l);
    }
    Ok(TrainOutput { model, losses })
}

/// One "iteration value" pair per line.
pub fn write_loss_trace(path: &Path, losses: &[f64]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{i} {l:.9e}").map_err(io)?;
    }
    w.flush().map_err(io)
}
