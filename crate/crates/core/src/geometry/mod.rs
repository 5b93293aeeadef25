//! Point cloud container and spatial queries.

mod index;
mod patches;

pub use index::{Neighbor, SpatialIndex};
pub use patches::{
    covering_patches, extract_patches, farthest_point_sample, patch_around, write_back, MergeMode,
    Patch,
};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance. Every exact query in the crate compares this
/// expression, so results agree bit-for-bit with a brute-force scan.
#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Similarity transform recorded by [`PointCloud::normalize_unit_sphere`]:
/// `normalized = (original - centroid) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub centroid: Point3,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        centroid: [0.0; 3],
        scale: 1.0,
    };

    pub fn apply(&self, p: Point3) -> Point3 {
        scale(sub(p, self.centroid), 1.0 / self.scale)
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        add(scale(p, self.scale), self.centroid)
    }

    /// `self` followed by `next`, as a single transform.
    pub fn then(&self, next: &Transform) -> Transform {
        Transform {
            centroid: add(self.centroid, scale(next.centroid, self.scale)),
            scale: self.scale * next.scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    transform: Option<Transform>,
}

impl PointCloud {
    /// Builds a cloud, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid_input("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid_input(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud {
            points,
            transform: None,
        })
    }

    pub fn with_transform(mut self, transform: Option<Transform>) -> Self {
        self.transform = transform;
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transform(&self) -> Option<Transform> {
        self.transform
    }

    /// Same transform, new coordinates. Used by operations that move points
    /// but stay in the same frame.
    pub fn replace_points(&self, points: Vec<Point3>) -> Result<Self> {
        Ok(PointCloud::new(points)?.with_transform(self.transform))
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            c = add(c, *p);
        }
        scale(c, 1.0 / n)
    }

    /// Radius of the bounding sphere centred at the centroid.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.points
            .iter()
            .map(|p| dist2(*p, c))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Centre at the centroid and scale so the farthest point has norm 1.
    /// A cloud whose points all coincide maps to the origin with scale 1.
    /// The applied transform is composed onto any previously recorded one.
    pub fn normalize_unit_sphere(&self) -> Result<PointCloud> {
        PointCloud::new(self.points.clone())?;
        let centroid = self.centroid();
        let mut radius = self.bounding_radius();
        if radius == 0.0 || !radius.is_finite() {
            radius = 1.0;
        }
        let t = Transform {
            centroid,
            scale: radius,
        };
        let points = self.points.iter().map(|p| t.apply(*p)).collect();
        let composed = match self.transform {
            Some(prev) => prev.then(&t),
            None => t,
        };
        Ok(PointCloud {
            points,
            transform: Some(composed),
        })
    }

    /// Map back to the frame the first normalization started from.
    pub fn denormalize(&self) -> PointCloud {
        match self.transform {
            None => self.clone(),
            Some(t) => PointCloud {
                points: self.points.iter().map(|p| t.invert(*p)).collect(),
                transform: None,
            },
        }
    }

    /// Mean distance from each point to its nearest other point.
    /// Zero for a single-point cloud.
    pub fn mean_spacing(&self) -> f64 {
        mean_spacing(&self.points)
    }
}

/// Mean distance from each point to its nearest other point (zero below two points).
pub fn mean_spacing(points: &[Point3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let index = SpatialIndex::build(points.to_vec());
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .knn(*p, 2)
                .expect("k=2 <= N")
                .into_iter()
                .find(|nb| nb.index != i)
                .map(|nb| nb.distance)
                .unwrap_or(0.0)
        })
        .sum();
    total / points.len() as f64
}
