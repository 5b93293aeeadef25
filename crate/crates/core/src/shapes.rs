//! Synthetic training and test surfaces.
//!
//! Every shape is parameterized by an area-preserving map from the unit
//! square, so uniform `(u, v)` gives uniform-area samples and a stratified
//! `(u, v)` pattern gives stratified ones.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{norm, scale, Point3, PointCloud};
use crate::metrics::{AnalyticSurface, TriangleMesh};
use crate::rng;

/// Smallest point count a shape may be sampled with.
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Torus { major: f64, minor: f64 },
    Box { half: [f64; 3] },
    Capsule { radius: f64, half_length: f64 },
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere { .. } => "sphere",
            ShapeKind::Torus { .. } => "torus",
            ShapeKind::Box { .. } => "box",
            ShapeKind::Capsule { .. } => "capsule",
        }
    }

    pub fn surface(&self) -> AnalyticSurface {
        match *self {
            ShapeKind::Sphere { radius } => AnalyticSurface::Sphere { radius },
            ShapeKind::Torus { major, minor } => AnalyticSurface::Torus { major, minor },
            ShapeKind::Box { half } => AnalyticSurface::Box { half },
            ShapeKind::Capsule { radius, half_length } => AnalyticSurface::Capsule { radius, half_length },
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            ShapeKind::Sphere { radius } => 4.0 * PI * radius * radius,
            ShapeKind::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            ShapeKind::Box { half: [a, b, c] } => 8.0 * (a * b + b * c + a * c),
            ShapeKind::Capsule { radius, half_length } => 4.0 * PI * radius * (radius + half_length),
        }
    }

    /// Area-preserving map from `[0,1)²` onto the surface.
    pub fn map_unit_square(&self, u: f64, v: f64) -> Point3 {
        match *self {
            ShapeKind::Sphere { radius } => {
                let z = 1.0 - 2.0 * u;
                let s = (1.0 - z * z).max(0.0).sqrt();
                let phi = TAU * v;
                let p = [s * phi.cos(), s * phi.sin(), z];
                // renormalize so the norm is exact to rounding
                scale(p, radius / norm(p))
            }
            ShapeKind::Torus { major, minor } => {
                let theta = torus_tube_angle(u, major, minor);
                let phi = TAU * v;
                let ring = major + minor * theta.cos();
                [ring * phi.cos(), ring * phi.sin(), minor * theta.sin()]
            }
            ShapeKind::Box { half } => box_face_point(half, u, v),
            ShapeKind::Capsule { radius, half_length } => {
                let cap = 2.0 * radius;
                let total = 2.0 * cap + 4.0 * half_length;
                let t = u * total;
                let phi = TAU * v;
                let (rho, z) = if t < cap {
                    // lower hemisphere: height uniform (Archimedes)
                    let h = -radius + t / cap * radius;
                    ((radius * radius - h * h).max(0.0).sqrt(), -half_length + h)
                } else if t < cap + 4.0 * half_length {
                    (radius, -half_length + (t - cap) / 2.0)
                } else {
                    let h = (t - cap - 4.0 * half_length) / cap * radius;
                    ((radius * radius - h * h).max(0.0).sqrt(), half_length + h)
                };
                [rho * phi.cos(), rho * phi.sin(), z]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.surface().validate()
    }

    /// Triangle mesh of the surface at a default resolution.
    pub fn mesh(&self) -> TriangleMesh {
        match *self {
            ShapeKind::Sphere { radius } => icosphere(radius, 4),
            ShapeKind::Torus { major, minor } => torus_mesh(major, minor, 128, 64),
            ShapeKind::Box { half } => box_mesh(half),
            ShapeKind::Capsule { radius, half_length } => capsule_mesh(radius, half_length, 128, 32),
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `name` or `name:p1,p2,...`. Names and parameters:
/// `sphere:radius`, `torus:major,minor`, `box:hx,hy,hz`, `capsule:radius,half_length`.
/// Missing parameters take the defaults `sphere:1`, `torus:1,0.4`,
/// `box:1,0.75,0.5` and `capsule:0.5,0.6`.
impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let values: Vec<f64> = match args {
            None => Vec::new(),
            Some(a) => a
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::invalid_arg(format!("bad shape parameter '{v}' in '{s}'")))
                })
                .collect::<Result<_>>()?,
        };
        let expect = |n: usize, default: &[f64]| -> Result<Vec<f64>> {
            match values.len() {
                0 => Ok(default.to_vec()),
                k if k == n => Ok(values.clone()),
                k => Err(Error::invalid_arg(format!("shape '{name}' takes {n} parameters, got {k}"))),
            }
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "sphere" => ShapeKind::Sphere {
                radius: expect(1, &[1.0])?[0],
            },
            "torus" => {
                let v = expect(2, &[1.0, 0.4])?;
                ShapeKind::Torus { major: v[0], minor: v[1] }
            }
            "box" | "cube" => {
                let v = expect(3, &[1.0, 0.75, 0.5])?;
                ShapeKind::Box { half: [v[0], v[1], v[2]] }
            }
            "capsule" => {
                let v = expect(2, &[0.5, 0.6])?;
                ShapeKind::Capsule {
                    radius: v[0],
                    half_length: v[1],
                }
            }
            other => {
                return Err(Error::invalid_arg(format!(
                    "unknown shape '{other}' (expected sphere, torus, box or capsule)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Tube angle with density proportional to `major + minor·cos θ`, by
/// inverting its CDF `(major·θ + minor·sin θ) / (2π·major)` with Newton steps
/// safeguarded by bisection.
fn torus_tube_angle(u: f64, major: f64, minor: f64) -> f64 {
    let target = u * TAU * major;
    let (mut lo, mut hi) = (0.0, TAU);
    let mut theta = TAU * u;
    for _ in 0..100 {
        let f = major * theta + minor * theta.sin() - target;
        if f.abs() < 1e-15 * major {
            break;
        }
        if f > 0.0 {
            hi = theta;
        } else {
            lo = theta;
        }
        let next = theta - f / (major + minor * theta.cos());
        theta = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    theta
}

fn box_face_point(half: [f64; 3], u: f64, v: f64) -> Point3 {
    let [a, b, c] = half;
    // faces in order ±x, ±y, ±z, each pair sharing an area
    let areas = [b * c, b * c, a * c, a * c, a * b, a * b];
    let total: f64 = areas.iter().sum();
    let mut t = u * total;
    let mut face = 5;
    for (k, &ar) in areas.iter().enumerate() {
        if t < ar {
            face = k;
            break;
        }
        t -= ar;
    }
    let s = (t / areas[face]).clamp(0.0, 1.0);
    let (s, w) = (2.0 * s - 1.0, 2.0 * v - 1.0);
    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
    match face / 2 {
        0 => [sign * a, s * b, w * c],
        1 => [s * a, sign * b, w * c],
        _ => [s * a, w * b, sign * c],
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Sampler {
    /// Independent uniform-area samples.
    #[default]
    UniformArea,
    /// Jittered rows crossed with a randomly shifted golden-ratio sequence.
    Stratified,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub points: usize,
    pub sampler: Sampler,
    pub seed: u64,
}

/// A sampled shape with its exact distance oracle and a mesh.
#[derive(Clone, Debug)]
pub struct SampledShape {
    pub cloud: PointCloud,
    pub surface: AnalyticSurface,
    pub mesh: Option<TriangleMesh>,
}

/// Sample `spec.points` surface points. The mesh is built only when
/// `with_mesh` is set.
pub fn sample_shape(spec: &ShapeSpec, with_mesh: bool) -> Result<SampledShape> {
    spec.kind.validate()?;
    if spec.points < MIN_POINTS {
        return Err(Error::invalid_arg(format!(
            "at least {MIN_POINTS} points are required, got {}",
            spec.points
        )));
    }
    let mut r = rng::stream(spec.seed, 0);
    let n = spec.points;
    let points: Vec<Point3> = match spec.sampler {
        Sampler::UniformArea => (0..n)
            .map(|_| {
                let (u, v) = (r.random::<f64>(), r.random::<f64>());
                spec.kind.map_unit_square(u, v)
            })
            .collect(),
        Sampler::Stratified => {
            let golden = (5f64.sqrt() - 1.0) / 2.0;
            let shift: f64 = r.random();
            (0..n)
                .map(|i| {
                    let u = (i as f64 + r.random::<f64>()) / n as f64;
                    let v = (i as f64 * golden + shift).fract();
                    spec.kind.map_unit_square(u, v)
                })
                .collect()
        }
    };
    Ok(SampledShape {
        cloud: PointCloud::new(points)?,
        surface: spec.kind.surface(),
        mesh: with_mesh.then(|| spec.kind.mesh()),
    })
}

fn mesh_or_panic(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, faces).expect("generated meshes are valid")
}

/// Subdivided icosahedron with vertices projected onto the sphere.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut verts {
        *v = scale(*v, 1.0 / norm(*v));
    }
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let m = scale(crate::geometry::add(verts[a], verts[b]), 0.5);
                verts.push(scale(m, 1.0 / norm(m)));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| scale(v, radius)).collect();
    mesh_or_panic(verts, faces)
}

/// Quad grid over (ring angle, tube angle), split into triangles.
pub fn torus_mesh(major: f64, minor: f64, rings: usize, sides: usize) -> TriangleMesh {
    let mut verts = Vec::with_capacity(rings * sides);
    for i in 0..rings {
        let phi = TAU * i as f64 / rings as f64;
        for j in 0..sides {
            let theta = TAU * j as f64 / sides as f64;
            let ring = major + minor * theta.cos();
            verts.push([ring * phi.cos(), ring * phi.sin(), minor * theta.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % rings) * sides + (j % sides);
    let mut faces = Vec::with_capacity(2 * rings * sides);
    for i in 0..rings {
        for j in 0..sides {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    mesh_or_panic(verts, faces)
}

pub fn box_mesh([a, b, c]: [f64; 3]) -> TriangleMesh {
    let verts: Vec<Point3> = (0..8)
        .map(|k| {
            [
                if k & 1 == 0 { -a } else { a },
                if k & 2 == 0 { -b } else { b },
                if k & 4 == 0 { -c } else { c },
            ]
        })
        .collect();
    let quads = [
        [0, 2, 6, 4],
        [1, 5, 7, 3],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 6, 7, 5],
    ];
    let faces = quads.iter().flat_map(|&[p, q, r, s]| [[p, q, r], [p, r, s]]).collect();
    mesh_or_panic(verts, faces)
}

/// Surface of revolution of the capsule profile, with single-vertex poles.
pub fn capsule_mesh(radius: f64, half_length: f64, segments: usize, cap_rings: usize) -> TriangleMesh {
    // profile (rho, z) from the bottom pole to the top pole, poles excluded
    let mut profile = Vec::new();
    for k in 1..=cap_rings {
        let a = -PI / 2.0 + PI / 2.0 * k as f64 / cap_rings as f64;
        profile.push((radius * a.cos(), -half_length + radius * a.sin()));
    }
    if half_length > 0.0 {
        let bands = ((2.0 * half_length / (PI * radius / 2.0 / cap_rings as f64)).ceil() as usize).max(1);
        for k in 1..=bands {
            profile.push((radius, -half_length + 2.0 * half_length * k as f64 / bands as f64));
        }
    }
    for k in 1..cap_rings {
        let a = PI / 2.0 * k as f64 / cap_rings as f64;
        profile.push((radius * a.cos(), half_length + radius * a.sin()));
    }
    let mut verts = vec![[0.0, 0.0, -half_length - radius]];
    for &(rho, z) in &profile {
        for s in 0..segments {
            let phi = TAU * s as f64 / segments as f64;
            verts.push([rho * phi.cos(), rho * phi.sin(), z]);
        }
    }
    let top = verts.len();
    verts.push([0.0, 0.0, half_length + radius]);
    let ring = |r: usize, s: usize| 1 + r * segments + (s % segments);
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(0, s + 1), ring(0, s)]);
    }
    for r in 0..profile.len() - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r, s + 1), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r + 1, s)]);
        }
    }
    let last = profile.len() - 1;
    for s in 0..segments {
        faces.push([top, ring(last, s), ring(last, s + 1)]);
    }
    mesh_or_panic(verts, faces)
}
