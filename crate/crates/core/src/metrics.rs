//! Distances between point sets and from point sets to surfaces.
//!
//! Conventions: Chamfer distance sums the two directed means of squared
//! nearest-neighbor distances; Hausdorff is the larger directed maximum of
//! unsquared distances; point-to-mesh is the mean squared distance from each
//! point to its closest triangle (points to mesh only).

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{add, dist2, dot, norm, scale, sub, Point3, PointCloud, SpatialIndex, Transform};

/// Triangle soup with validated indices and no degenerate faces.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

/// Faces whose area is at or below this are rejected on load.
pub const DEGENERATE_AREA: f64 = 1e-12;

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("mesh has non-finite vertex coordinates"));
        }
        for (k, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::invalid_input(format!(
                    "face {k} references vertex {bad}, mesh has {}",
                    vertices.len()
                )));
            }
            let area = triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            if area <= DEGENERATE_AREA {
                return Err(Error::invalid_input(format!("face {k} is degenerate (area {area:.3e})")));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, f: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Apply a normalization transform to every vertex.
    pub fn transformed(&self, t: &Transform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| t.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}

/// Closest point to `p` on triangle `abc` (Voronoi region walk).
pub fn closest_point_on_triangle(p: Point3, [a, b, c]: [Point3; 3]) -> Point3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return add(a, scale(ab, d1 / (d1 - d3)));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return add(a, scale(ac, d2 / (d2 - d6)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return add(b, scale(sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6))));
    }
    let denom = 1.0 / (va + vb + vc);
    add(a, add(scale(ab, vb * denom), scale(ac, vc * denom)))
}

/// Squared distance from `p` to triangle `t`.
pub fn point_triangle_dist2(p: Point3, t: [Point3; 3]) -> f64 {
    dist2(p, closest_point_on_triangle(p, t))
}

/// Surfaces with closed-form unsigned distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticSurface {
    Sphere { radius: f64 },
    /// Ring of radius `major` around the z axis, tube radius `minor`.
    Torus { major: f64, minor: f64 },
    /// Axis-aligned box centered at the origin.
    Box { half: [f64; 3] },
    /// Points at distance `radius` from the z-axis segment `[−half_length, half_length]`.
    Capsule { radius: f64, half_length: f64 },
}

impl AnalyticSurface {
    pub fn distance(&self, p: Point3) -> f64 {
        match *self {
            AnalyticSurface::Sphere { radius } => (norm(p) - radius).abs(),
            AnalyticSurface::Torus { major, minor } => {
                let q = (p[0] * p[0] + p[1] * p[1]).sqrt() - major;
                ((q * q + p[2] * p[2]).sqrt() - minor).abs()
            }
            AnalyticSurface::Box { half } => {
                let q = [p[0].abs() - half[0], p[1].abs() - half[1], p[2].abs() - half[2]];
                if q.iter().any(|&v| v > 0.0) {
                    norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)])
                } else {
                    -q[0].max(q[1]).max(q[2])
                }
            }
            AnalyticSurface::Capsule { radius, half_length } => {
                let z = p[2].clamp(-half_length, half_length);
                (norm([p[0], p[1], p[2] - z]) - radius).abs()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AnalyticSurface::Sphere { radius } => radius > 0.0,
            AnalyticSurface::Torus { major, minor } => minor > 0.0 && major > minor,
            AnalyticSurface::Box { half } => half.iter().all(|&h| h > 0.0),
            AnalyticSurface::Capsule { radius, half_length } => radius > 0.0 && half_length >= 0.0,
        };
        let finite = match *self {
            AnalyticSurface::Sphere { radius } => radius.is_finite(),
            AnalyticSurface::Torus { major, minor } => major.is_finite() && minor.is_finite(),
            AnalyticSurface::Box { half } => half.iter().all(|h| h.is_finite()),
            AnalyticSurface::Capsule { radius, half_length } => radius.is_finite() && half_length.is_finite(),
        };
        if ok && finite {
            Ok(())
        } else {
            Err(Error::invalid_arg(format!("invalid surface parameters {self:?}")))
        }
    }
}

/// Per-point unsigned distances to a surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDistances {
    pub per_point: Vec<f64>,
    pub mean: f64,
    pub mean_squared: f64,
}

pub fn point_to_surface(x: &PointCloud, surface: &AnalyticSurface) -> SurfaceDistances {
    surface_distances(x.points().iter().map(|&p| surface.distance(p)).collect())
}

fn surface_distances(per_point: Vec<f64>) -> SurfaceDistances {
    let n = per_point.len() as f64;
    let mean = per_point.iter().sum::<f64>() / n;
    let mean_squared = per_point.iter().map(|d| d * d).sum::<f64>() / n;
    SurfaceDistances {
        per_point,
        mean,
        mean_squared,
    }
}

/// Squared distance from each point of `from` to its nearest point in `to`.
fn directed<'a>(from: &'a [Point3], to: &'a SpatialIndex) -> impl Iterator<Item = f64> + 'a {
    from.iter().map(move |&p| dist2(p, to.points()[to.nearest(p).index]))
}

fn check_nonempty(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid_arg("metric needs two non-empty clouds"));
    }
    Ok(())
}

/// `mean_x min_y ‖x−y‖² + mean_y min_x ‖x−y‖²`.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_nonempty(x, y)?;
    let (ix, iy) = (SpatialIndex::build(x.points().to_vec()), SpatialIndex::build(y.points().to_vec()));
    let a: f64 = directed(x.points(), &iy).sum::<f64>() / x.len() as f64;
    let b: f64 = directed(y.points(), &ix).sum::<f64>() / y.len() as f64;
    Ok(a + b)
}

/// `max(max_x min_y ‖x−y‖, max_y min_x ‖x−y‖)`.
pub fn hausdorff(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_nonempty(x, y)?;
    let (ix, iy) = (SpatialIndex::build(x.points().to_vec()), SpatialIndex::build(y.points().to_vec()));
    let a = directed(x.points(), &iy).fold(0.0, f64::max);
    let b = directed(y.points(), &ix).fold(0.0, f64::max);
    Ok(a.max(b).sqrt())
}

/// Mean over points of the squared distance to the closest triangle.
pub fn point_to_mesh(x: &PointCloud, mesh: &TriangleMesh) -> Result<f64> {
    let d = point_to_mesh_distances(x.points(), mesh)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Squared distance from every point to its closest triangle.
///
/// Triangles are indexed by centroid. Every point of a triangle lies within
/// the triangle's circumscribing radius `ρ` of its centroid, so once some
/// triangle at distance `d` is known, only triangles with centroid closer
/// than `d + ρ_max` can do better.
pub fn point_to_mesh_distances(points: &[Point3], mesh: &TriangleMesh) -> Result<Vec<f64>> {
    if mesh.faces.is_empty() {
        return Err(Error::invalid_arg("mesh has no faces"));
    }
    let centroids: Vec<Point3> = (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            scale(add(add(a, b), c), 1.0 / 3.0)
        })
        .collect();
    let reach = (0..mesh.faces.len())
        .map(|f| mesh.triangle(f).iter().map(|&v| dist2(v, centroids[f])).fold(0.0, f64::max))
        .fold(0.0, f64::max)
        .sqrt();
    let index = SpatialIndex::build(centroids);
    let nf = mesh.faces.len();
    Ok(points
        .iter()
        .map(|&p| {
            let first = index.nearest(p).index;
            let mut best = point_triangle_dist2(p, mesh.triangle(first));
            let bound = best.sqrt() + reach;
            // tiny slack so rounding in the bound never drops a candidate
            let candidates = index.radius_neighbors(p, bound * (1.0 + 1e-12) + 1e-300, nf).unwrap_or_default();
            for nb in candidates {
                best = best.min(point_triangle_dist2(p, mesh.triangle(nb.index)));
            }
            best
        })
        .collect())
}

/// Reference geometry for point-to-surface error.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    None,
    Mesh(&'a TriangleMesh),
    Surface(&'a AnalyticSurface),
}

/// Metrics in the evaluation frame: prediction and ground truth are each
/// normalized into the unit sphere; a reference surface follows the ground
/// truth's normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub chamfer: f64,
    pub hausdorff: f64,
    pub p2m: Option<f64>,
}

pub const CD_SCALE: f64 = 1e4;
pub const HD_SCALE: f64 = 1e3;
pub const P2M_SCALE: f64 = 1e5;

pub fn evaluate(pred: &PointCloud, gt: &PointCloud, reference: Reference<'_>) -> Result<Evaluation> {
    // Recorded transforms are dropped so `frame` maps exactly the given
    // gt coordinates into the evaluation frame.
    let p = PointCloud::new(pred.points().to_vec())?.normalize_unit_sphere()?;
    let g = PointCloud::new(gt.points().to_vec())?.normalize_unit_sphere()?;
    let frame = g.transform().unwrap_or(Transform::IDENTITY);
    let p2m = match reference {
        Reference::None => None,
        Reference::Mesh(m) => Some(point_to_mesh(&p, &m.transformed(&frame))?),
        Reference::Surface(s) => {
            let d: Vec<f64> = p
                .points()
                .iter()
                .map(|&x| s.distance(frame.invert(x)) / frame.scale)
                .collect();
            Some(surface_distances(d).mean_squared)
        }
    };
    Ok(Evaluation {
        chamfer: chamfer(&p, &g)?,
        hausdorff: hausdorff(&p, &g)?,
        p2m,
    })
}

impl Evaluation {
    /// Plain table with the reporting scales applied.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<12}{:>14}\n", "metric", "value"));
        s.push_str(&format!("{:<12}{:>14.6}\n", "CD(x1e4)", self.chamfer * CD_SCALE));
        s.push_str(&format!("{:<12}{:>14.6}\n", "HD(x1e3)", self.hausdorff * HD_SCALE));
        if let Some(p) = self.p2m {
            s.push_str(&format!("{:<12}{:>14.6}\n", "P2M(x1e5)", p * P2M_SCALE));
        }
        s
    }

    /// `name<TAB>value` lines with the reporting scales applied.
    pub fn lines(&self) -> String {
        let mut s = format!("cd_x1e4\t{:.9e}\nhd_x1e3\t{:.9e}\n", self.chamfer * CD_SCALE, self.hausdorff * HD_SCALE);
        if let Some(p) = self.p2m {
            s.push_str(&format!("p2m_x1e5\t{:.9e}\n", p * P2M_SCALE));
        }
        s
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}
