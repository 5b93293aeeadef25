//! Synthetic degradations: additive noise models and the naive upsampling
//! initialization.
//!
//! Noise scales are fractions of the bounding-sphere radius `R` of the input
//! cloud (measured about its centroid). Every point draws from its own
//! ChaCha8 stream keyed by `(seed, point index)` (see [`crate::rng`]).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    IsotropicGaussian,
    /// Independent Laplace noise on each axis with scale `s·R`.
    Laplace,
    /// `0` with probability 0.4, otherwise one of the six axis offsets `±s·R`
    /// with probability 0.1 each.
    Discrete,
    /// Gaussian with covariance `(s·R)² · Σ₀`, see [`ANISOTROPIC_COVARIANCE`].
    AnisotropicGaussian,
    /// Gaussian on the x coordinate only.
    UnidirectionalGaussian,
    /// Uniform in a ball of radius `s·R`.
    UniformBall,
}

/// Unit-scale covariance of the anisotropic model.
pub const ANISOTROPIC_COVARIANCE: [[f64; 3]; 3] = [
    [1.0, -0.5, -0.25],
    [-0.5, 1.0, -0.25],
    [-0.25, -0.25, 1.0],
];

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::IsotropicGaussian,
        NoiseKind::Laplace,
        NoiseKind::Discrete,
        NoiseKind::AnisotropicGaussian,
        NoiseKind::UnidirectionalGaussian,
        NoiseKind::UniformBall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::IsotropicGaussian => "gaussian",
            NoiseKind::Laplace => "laplace",
            NoiseKind::Discrete => "discrete",
            NoiseKind::AnisotropicGaussian => "aniso",
            NoiseKind::UnidirectionalGaussian => "unidir",
            NoiseKind::UniformBall => "uniform",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "gaussian" | "isotropic" | "isotropic-gaussian" => NoiseKind::IsotropicGaussian,
            "laplace" => NoiseKind::Laplace,
            "discrete" => NoiseKind::Discrete,
            "aniso" | "anisotropic" | "anisotropic-gaussian" => NoiseKind::AnisotropicGaussian,
            "unidir" | "unidirectional" | "unidirectional-gaussian" => {
                NoiseKind::UnidirectionalGaussian
            }
            "uniform" | "uniform-ball" => NoiseKind::UniformBall,
            other => return Err(Error::invalid_arg(format!("unknown noise kind '{other}'"))),
        };
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Fraction of the bounding-sphere radius, e.g. `0.01` for 1%.
    pub scale: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, scale: f64, seed: u64) -> Self {
        NoiseSpec { kind, scale, seed }
    }
}

/// Lower-triangular Cholesky factor of [`ANISOTROPIC_COVARIANCE`].
fn anisotropic_factor() -> [[f64; 3]; 3] {
    let a = ANISOTROPIC_COVARIANCE;
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    l
}

fn normal3(rng: &mut StreamRng) -> Point3 {
    [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ]
}

fn laplace(rng: &mut StreamRng, b: f64) -> f64 {
    // inverse CDF on u in (-1/2, 1/2)
    let u: f64 = rng.random::<f64>() - 0.5;
    let mag = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -b * u.signum() * mag.ln()
}

/// Displacement of one point for an absolute noise scale `sigma`.
pub fn sample_displacement(kind: NoiseKind, sigma: f64, rng: &mut StreamRng) -> Point3 {
    match kind {
        NoiseKind::IsotropicGaussian => {
            let z = normal3(rng);
            [z[0] * sigma, z[1] * sigma, z[2] * sigma]
        }
        NoiseKind::Laplace => [laplace(rng, sigma), laplace(rng, sigma), laplace(rng, sigma)],
        NoiseKind::Discrete => {
            let u: f64 = rng.random();
            if u < 0.4 {
                [0.0; 3]
            } else {
                let slot = (((u - 0.4) / 0.1) as usize).min(5);
                let mut d = [0.0; 3];
                d[slot / 2] = if slot % 2 == 0 { sigma } else { -sigma };
                d
            }
        }
        NoiseKind::AnisotropicGaussian => {
            let l = anisotropic_factor();
            let z = normal3(rng);
            let mut d = [0.0; 3];
            for i in 0..3 {
                for k in 0..=i {
                    d[i] += l[i][k] * z[k];
                }
                d[i] *= sigma;
            }
            d
        }
        NoiseKind::UnidirectionalGaussian => {
            let z: f64 = StandardNormal.sample(rng);
            [z * sigma, 0.0, 0.0]
        }
        NoiseKind::UniformBall => {
            // direction from a normalized Gaussian, radius by cube-root inversion
            let mut dir = normal3(rng);
            let mut len = crate::geometry::norm(dir);
            while len == 0.0 {
                dir = normal3(rng);
                len = crate::geometry::norm(dir);
            }
            let radius = sigma * rng.random::<f64>().cbrt();
            [
                dir[0] / len * radius,
                dir[1] / len * radius,
                dir[2] / len * radius,
            ]
        }
    }
}

/// Perturb each point with noise of absolute scale `sigma`.
pub fn apply_noise_absolute(
    cloud: &PointCloud,
    kind: NoiseKind,
    sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid_arg(format!("noise scale must be non-negative, got {sigma}")));
    }
    let points = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = rng::stream(seed, i as u64);
            let d = sample_displacement(kind, sigma, &mut r);
            match kind {
                // leave y and z untouched rather than adding 0.0
                NoiseKind::UnidirectionalGaussian => [p[0] + d[0], p[1], p[2]],
                _ => [p[0] + d[0], p[1] + d[1], p[2] + d[2]],
            }
        })
        .collect();
    cloud.replace_points(points)
}

/// Perturb `cloud` according to `spec`, with the scale taken relative to the
/// cloud's bounding-sphere radius.
pub fn apply_noise(cloud: &PointCloud, spec: &NoiseSpec) -> Result<PointCloud> {
    if !(spec.scale > 0.0) || !spec.scale.is_finite() {
        return Err(Error::invalid_arg(format!(
            "noise scale must be positive, got {}",
            spec.scale
        )));
    }
    apply_noise_absolute(cloud, spec.kind, spec.scale * cloud.bounding_radius(), spec.seed)
}

/// `ratio` copies of every input point, each independently perturbed by
/// isotropic Gaussian noise with std `sigma·R`. Copy `c` of point `i` lands
/// at output index `i·ratio + c`.
pub fn naive_upsample_init(
    cloud: &PointCloud,
    ratio: usize,
    sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid_arg(format!("init sigma must be non-negative, got {sigma}")));
    }
    naive_upsample_absolute(cloud, ratio, sigma * cloud.bounding_radius(), seed)
}

/// [`naive_upsample_init`] with an absolute standard deviation.
pub fn naive_upsample_absolute(
    cloud: &PointCloud,
    ratio: usize,
    std: f64,
    seed: u64,
) -> Result<PointCloud> {
    if ratio < 2 {
        return Err(Error::invalid_arg(format!("upsampling ratio must be at least 2, got {ratio}")));
    }
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid_arg(format!("init std must be non-negative, got {std}")));
    }
    let mut out = Vec::with_capacity(cloud.len() * ratio);
    for (i, p) in cloud.points().iter().enumerate() {
        for c in 0..ratio {
            let mut r = rng::stream(seed, (i * ratio + c) as u64);
            let d = sample_displacement(NoiseKind::IsotropicGaussian, std, &mut r);
            out.push([p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
        }
    }
    cloud.replace_points(out)
}
