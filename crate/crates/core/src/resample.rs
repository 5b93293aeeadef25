//! Restoration by gradient ascent: `x ← x + α_t g(x)` with `α_t = α₁ d^{t−1}`,
//! optionally followed every step by the graph smoothing solve.

use crate::degradation::naive_upsample_absolute;
use crate::error::{Error, Result};
use crate::field::{self, ContextFeatures, GradientFieldModel};
use crate::geometry::{add, dist2, scale, Point3, PointCloud, SpatialIndex};
use crate::graph::{build_knn_graph, laplacian, solve_regularized, Laplacian, DEFAULT_K, DEFAULT_LAMBDA};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Regularizer {
    #[default]
    None,
    /// Laplacian built once from the input cloud.
    Glr,
    /// Laplacian rebuilt from the intermediate cloud before every solve.
    Rglr,
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Regularizer::None),
            "glr" => Ok(Regularizer::Glr),
            "rglr" => Ok(Regularizer::Rglr),
            other => Err(Error::invalid_arg(format!("unknown regularizer '{other}' (none, glr, rglr)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResampleConfig {
    pub alpha1: f64,
    pub decay: f64,
    pub steps: usize,
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub graph_k: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            alpha1: 0.15,
            decay: 0.95,
            steps: 50,
            regularizer: Regularizer::None,
            lambda: DEFAULT_LAMBDA,
            graph_k: DEFAULT_K,
        }
    }
}

impl ResampleConfig {
    /// `steps = 0` is accepted and means "return the input".
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha1 < 1.0) {
            return Err(Error::invalid_arg(format!("alpha1 must lie in (0, 1), got {}", self.alpha1)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid_arg(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.regularizer != Regularizer::None {
            if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
                return Err(Error::invalid_arg(format!("lambda must be non-negative, got {}", self.lambda)));
            }
            if self.graph_k == 0 {
                return Err(Error::invalid_arg("graph k must be positive"));
            }
        }
        Ok(())
    }

    /// `α_t` for `t = 1..=steps`.
    pub fn step_sizes(&self) -> Vec<f64> {
        let mut a = self.alpha1;
        (0..self.steps)
            .map(|_| {
                let cur = a;
                a *= self.decay;
                cur
            })
            .collect()
    }
}

/// Anything that can be queried for `g(x)` at many positions.
pub trait GradientField {
    fn gradients(&self, xs: &[Point3]) -> Result<Vec<Point3>>;
}

/// A trained model with its context features frozen.
pub struct LearnedField<'a> {
    model: &'a GradientFieldModel,
    ctx: ContextFeatures,
}

impl<'a> LearnedField<'a> {
    pub fn new(model: &'a GradientFieldModel, context: &PointCloud) -> Result<Self> {
        let ctx = field::extract_context_features(model, context)?;
        Ok(LearnedField { model, ctx })
    }

    pub fn context(&self) -> &ContextFeatures {
        &self.ctx
    }
}

impl GradientField for LearnedField<'_> {
    fn gradients(&self, xs: &[Point3]) -> Result<Vec<Point3>> {
        field::estimate_gradients(self.model, xs, &self.ctx)
    }
}

/// `g ≡ 0`.
pub struct ZeroField;

impl GradientField for ZeroField {
    fn gradients(&self, xs: &[Point3]) -> Result<Vec<Point3>> {
        Ok(vec![[0.0; 3]; xs.len()])
    }
}

/// `g ≡ c`.
pub struct ConstantField(pub Point3);

impl GradientField for ConstantField {
    fn gradients(&self, xs: &[Point3]) -> Result<Vec<Point3>> {
        Ok(vec![self.0; xs.len()])
    }
}

/// The exact target field `NN(x, Y) − x` of a clean cloud.
pub struct OracleField {
    index: SpatialIndex,
}

impl OracleField {
    pub fn new(clean: &PointCloud) -> Self {
        OracleField {
            index: SpatialIndex::build(clean.points().to_vec()),
        }
    }
}

impl GradientField for OracleField {
    fn gradients(&self, xs: &[Point3]) -> Result<Vec<Point3>> {
        Ok(crate::training::target_gradients(xs, &self.index))
    }
}

/// Work done by one run, for checking when graphs are (re)built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResampleStats {
    pub steps: usize,
    pub graph_builds: usize,
    pub solves: usize,
}

pub struct ResampleOutput {
    pub cloud: PointCloud,
    pub stats: ResampleStats,
}

fn regularization_laplacian(points: &[Point3], k: usize) -> Result<Laplacian> {
    let cloud = PointCloud::new(points.to_vec())?;
    Ok(laplacian(&build_knn_graph(&cloud, k, None)?))
}

/// Run the ascent on `query` under `field`, calling `observe(t, points)` with
/// the cloud after every step `t = 1..=T`. The output keeps the query's
/// recorded transform.
pub fn resample_field(
    field: &dyn GradientField,
    query: &PointCloud,
    cfg: &ResampleConfig,
    mut observe: impl FnMut(usize, &[Point3]),
) -> Result<ResampleOutput> {
    cfg.validate()?;
    let mut stats = ResampleStats::default();
    let mut x = query.points().to_vec();
    let fixed = if cfg.regularizer == Regularizer::Glr && cfg.steps > 0 {
        stats.graph_builds += 1;
        Some(regularization_laplacian(&x, cfg.graph_k).map_err(|e| step_error(0, e))?)
    } else {
        None
    };
    for (t, alpha) in cfg.step_sizes().into_iter().enumerate() {
        let step = t + 1;
        let run = |x: &mut Vec<Point3>, stats: &mut ResampleStats| -> Result<()> {
            let g = field.gradients(x)?;
            for (p, d) in x.iter_mut().zip(&g) {
                *p = add(*p, scale(*d, alpha));
            }
            let rebuilt;
            let l = match cfg.regularizer {
                Regularizer::None => return Ok(()),
                Regularizer::Glr => fixed.as_ref().expect("built before the loop"),
                Regularizer::Rglr => {
                    stats.graph_builds += 1;
                    rebuilt = regularization_laplacian(x, cfg.graph_k)?;
                    &rebuilt
                }
            };
            *x = solve_regularized(l, x, cfg.lambda)?;
            stats.solves += 1;
            Ok(())
        };
        run(&mut x, &mut stats).map_err(|e| step_error(step, e))?;
        if x.iter().flatten().any(|c| !c.is_finite()) {
            return Err(step_error(step, Error::invalid_input("non-finite coordinates")));
        }
        stats.steps = step;
        observe(step, &x);
    }
    Ok(ResampleOutput {
        cloud: query.replace_points(x)?,
        stats,
    })
}

fn step_error(step: usize, e: Error) -> Error {
    Error::Step {
        step,
        source: Box::new(e),
    }
}

/// Resample `query` with the learned field of `context`. Both clouds must be
/// in the frame the model was trained in (the unit sphere).
pub fn resample(
    model: &GradientFieldModel,
    query: &PointCloud,
    context: &PointCloud,
    cfg: &ResampleConfig,
) -> Result<PointCloud> {
    let field = LearnedField::new(model, context)?;
    Ok(resample_field(&field, query, cfg, |_, _| {})?.cloud)
}

/// Denoise in the unit-sphere frame and map back.
pub fn denoise(model: &GradientFieldModel, noisy: &PointCloud, cfg: &ResampleConfig) -> Result<PointCloud> {
    denoise_with(model, noisy, cfg, |_, _| {}).map(|o| o.cloud)
}

/// [`denoise`] reporting every intermediate cloud in the input's frame.
pub fn denoise_with(
    model: &GradientFieldModel,
    noisy: &PointCloud,
    cfg: &ResampleConfig,
    mut observe: impl FnMut(usize, &[Point3]),
) -> Result<ResampleOutput> {
    cfg.validate()?;
    if cfg.steps == 0 {
        return Ok(ResampleOutput {
            cloud: noisy.clone(),
            stats: ResampleStats::default(),
        });
    }
    let base = PointCloud::new(noisy.points().to_vec())?;
    let normalized = base.normalize_unit_sphere()?;
    let frame = normalized.transform().expect("normalization records a transform");
    let field = LearnedField::new(model, &normalized)?;
    let out = resample_field(&field, &normalized, cfg, |t, pts| {
        let back: Vec<Point3> = pts.iter().map(|p| frame.invert(*p)).collect();
        observe(t, &back)
    })?;
    let cloud = noisy.replace_points(out.cloud.denormalize().into_points())?;
    Ok(ResampleOutput { cloud, stats: out.stats })
}

/// Upsample by `ratio`: `ratio` jittered copies of every sparse point (std
/// `init_sigma` times the bounding radius) resampled with the sparse cloud
/// as context.
pub fn upsample(
    model: &GradientFieldModel,
    sparse: &PointCloud,
    ratio: usize,
    init_sigma: f64,
    seed: u64,
    cfg: &ResampleConfig,
) -> Result<PointCloud> {
    cfg.validate()?;
    if !(init_sigma >= 0.0) || !init_sigma.is_finite() {
        return Err(Error::invalid_arg(format!("init sigma must be non-negative, got {init_sigma}")));
    }
    let base = PointCloud::new(sparse.points().to_vec())?;
    let normalized = base.normalize_unit_sphere()?;
    let init = naive_upsample_absolute(&normalized, ratio, init_sigma, seed)?;
    let field = LearnedField::new(model, &normalized)?;
    let out = resample_field(&field, &init, cfg, |_, _| {})?;
    sparse.replace_points(out.cloud.denormalize().into_points())
}

/// Largest distance any point moved between two clouds of equal size.
pub fn max_displacement(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| dist2(*p, *q)).fold(0.0, f64::max).sqrt()
}

