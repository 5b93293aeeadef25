//! Point cloud restoration by gradient ascent on a learned gradient field.
//!
//! A degraded cloud is treated as a sample of a noise-convolved surface
//! distribution. A small network estimates the gradient of its log-density
//! at arbitrary query positions, and restoration moves every point uphill
//! with a decaying step size, optionally interleaved with graph Laplacian
//! smoothing.
//!
//! Module map:
//!
//! * [`geometry`] point clouds, normalization, exact kNN/radius index, FPS, patches
//! * [`degradation`] noise models and naive upsampling initialization
//! * [`graph`] kNN graphs, Laplacians and the regularized solve
//! * [`autodiff`] a small reverse-mode tape used by the network
//! * [`field`] the gradient field network
//! * [`training`] target field, query sampling, loss and training loop
//! * [`resample`] iterative restoration
//! * [`metrics`] Chamfer, Hausdorff, point-to-mesh and analytic distances
//! * [`shapes`] synthetic surfaces
//! * [`io`] XYZ / PLY / checkpoint files
//! * [`cli`] the command line driver

pub mod autodiff;
#[cfg(feature = "cli")]
pub mod cli;
pub mod degradation;
pub mod error;
pub mod field;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod shapes;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud, SpatialIndex, Transform};
