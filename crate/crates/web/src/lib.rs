//! WebAssembly bindings for the browser demo.
//!
//! Point clouds cross the boundary as flat `[x0, y0, z0, x1, ...]` arrays.

use std::path::Path;

use gradfield::degradation::{apply_noise, NoiseKind, NoiseSpec};
use gradfield::graph::{build_knn_graph, laplacian, solve_regularized};
use gradfield::metrics::{evaluate, Reference};
use gradfield::resample::{self, Regularizer, ResampleConfig};
use gradfield::shapes::{sample_shape, Sampler, ShapeKind, ShapeSpec};
use gradfield::{field::GradientFieldModel, Point3, PointCloud};
use wasm_bindgen::prelude::*;

fn js(e: gradfield::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn unflatten(flat: &[f64]) -> Result<PointCloud, JsError> {
    if flat.len() % 3 != 0 {
        return Err(JsError::new("coordinate array length must be a multiple of 3"));
    }
    PointCloud::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()).map_err(js)
}

fn flatten(points: &[Point3]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

/// Sample `points` points of a shape such as `"torus"` or `"box:1,0.5,0.5"`.
#[wasm_bindgen]
pub fn generate(shape: &str, points: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let kind: ShapeKind = shape.parse().map_err(js)?;
    let s = sample_shape(
        &ShapeSpec {
            kind,
            points,
            sampler: Sampler::UniformArea,
            seed: seed.into(),
        },
        false,
    )
    .map_err(js)?;
    Ok(flatten(s.cloud.points()))
}

/// Add noise of kind `noise` (gaussian, laplace, ...) at `level` times the bounding radius.
#[wasm_bindgen]
pub fn corrupt(points: &[f64], noise: &str, level: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let kind: NoiseKind = noise.parse().map_err(js)?;
    let noisy = apply_noise(&unflatten(points)?, &NoiseSpec::new(kind, level, seed.into())).map_err(js)?;
    Ok(flatten(noisy.points()))
}

/// One graph Laplacian smoothing solve `(I + λL) Z = X` on a kNN graph.
#[wasm_bindgen]
pub fn smooth(points: &[f64], k: usize, lambda: f64) -> Result<Vec<f64>, JsError> {
    let cloud = unflatten(points)?;
    let l = laplacian(&build_knn_graph(&cloud, k, None).map_err(js)?);
    Ok(flatten(&solve_regularized(&l, cloud.points(), lambda).map_err(js)?))
}

/// A model loaded from checkpoint text.
#[wasm_bindgen]
pub struct Model {
    inner: GradientFieldModel,
}

#[wasm_bindgen]
impl Model {
    #[wasm_bindgen(constructor)]
    pub fn new(checkpoint: &str) -> Result<Model, JsError> {
        let inner = gradfield::io::parse_checkpoint(checkpoint, Path::new("checkpoint")).map_err(js)?;
        Ok(Model { inner })
    }

    #[wasm_bindgen(getter)]
    pub fn parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    /// Gradient-ascent denoising; `regularizer` is none, glr or rglr.
    pub fn denoise(&self, points: &[f64], steps: usize, regularizer: &str, lambda: f64) -> Result<Vec<f64>, JsError> {
        let cfg = ResampleConfig {
            steps,
            regularizer: regularizer.parse::<Regularizer>().map_err(js)?,
            lambda,
            ..ResampleConfig::default()
        };
        let out = resample::denoise(&self.inner, &unflatten(points)?, &cfg).map_err(js)?;
        Ok(flatten(out.points()))
    }
}

/// Chamfer distance after normalizing both clouds into the unit sphere.
#[wasm_bindgen]
pub fn chamfer(pred: &[f64], gt: &[f64]) -> Result<f64, JsError> {
    Ok(evaluate(&unflatten(pred)?, &unflatten(gt)?, Reference::None).map_err(js)?.chamfer)
}
