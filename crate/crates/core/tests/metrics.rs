use gradfield::geometry::{dist2, dot, norm, scale, sub};
use gradfield::metrics::{
    chamfer, evaluate, hausdorff, point_to_mesh, point_to_mesh_distances, point_to_surface, AnalyticSurface,
    Reference, TriangleMesh,
};
use gradfield::shapes::{icosphere, sample_shape, Sampler, ShapeKind, ShapeSpec};
use gradfield::{rng, Point3, PointCloud};
use rand::Rng;

fn random_cloud(r: &mut impl Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect(),
    )
    .unwrap()
}

fn brute_directed(x: &[Point3], y: &[Point3]) -> Vec<f64> {
    x.iter()
        .map(|&p| y.iter().map(|&q| dist2(p, q)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn brute_chamfer(x: &[Point3], y: &[Point3]) -> f64 {
    brute_directed(x, y).iter().sum::<f64>() / x.len() as f64 + brute_directed(y, x).iter().sum::<f64>() / y.len() as f64
}

fn brute_hausdorff(x: &[Point3], y: &[Point3]) -> f64 {
    let a = brute_directed(x, y).into_iter().fold(0.0, f64::max);
    let b = brute_directed(y, x).into_iter().fold(0.0, f64::max);
    a.max(b).sqrt()
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn segment_dist2(p: Point3, a: Point3, b: Point3) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

/// Plane projection when the foot is inside, else the nearest edge.
fn brute_triangle_dist2(p: Point3, [a, b, c]: [Point3; 3]) -> f64 {
    let n = cross(sub(b, a), sub(c, a));
    let nn = dot(n, n);
    let h = dot(sub(p, a), n) / nn;
    let foot = sub(p, scale(n, h));
    let inside = [(a, b), (b, c), (c, a)]
        .iter()
        .all(|&(u, v)| dot(cross(sub(v, u), sub(foot, u)), n) >= 0.0);
    if inside {
        h * h * nn
    } else {
        segment_dist2(p, a, b).min(segment_dist2(p, b, c)).min(segment_dist2(p, c, a))
    }
}

#[test]
fn chamfer_and_hausdorff_match_brute_force() {
    let mut r = rng::stream(1, 0);
    for _ in 0..200 {
        let (n, m) = (r.random_range(1..=64), r.random_range(1..=64));
        let x = random_cloud(&mut r, n);
        let y = random_cloud(&mut r, m);
        let cd = chamfer(&x, &y).unwrap();
        let hd = hausdorff(&x, &y).unwrap();
        assert!((cd - brute_chamfer(x.points(), y.points())).abs() <= 1e-12);
        assert_eq!(hd, brute_hausdorff(x.points(), y.points()));
    }
}

#[test]
fn metric_examples() {
    let o = PointCloud::new(vec![[0.0; 3]]).unwrap();
    let e = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(chamfer(&o, &e).unwrap(), 2.0);
    assert_eq!(hausdorff(&o, &e).unwrap(), 1.0);
    let mut r = rng::stream(2, 0);
    let x = random_cloud(&mut r, 50);
    assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
    assert_eq!(hausdorff(&x, &x).unwrap(), 0.0);
}

#[test]
fn hausdorff_of_a_subset_is_the_far_side_term() {
    let mut r = rng::stream(3, 0);
    let y = random_cloud(&mut r, 60);
    let x = PointCloud::new(y.points()[..20].to_vec()).unwrap();
    let far = brute_directed(y.points(), x.points()).into_iter().fold(0.0, f64::max).sqrt();
    assert_eq!(hausdorff(&x, &y).unwrap(), far);
}

#[test]
fn metrics_are_symmetric_and_rigid_invariant() {
    let mut r = rng::stream(4, 0);
    for _ in 0..20 {
        let x = random_cloud(&mut r, 40);
        let y = random_cloud(&mut r, 30);
        assert_eq!(chamfer(&x, &y).unwrap(), chamfer(&y, &x).unwrap());
        assert_eq!(hausdorff(&x, &y).unwrap(), hausdorff(&y, &x).unwrap());
        // random rotation from a normalized quaternion, plus a shift
        let q: [f64; 4] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let l = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, a, b, c] = q.map(|v| v / l);
        let rot = [
            [1.0 - 2.0 * (b * b + c * c), 2.0 * (a * b - c * w), 2.0 * (a * c + b * w)],
            [2.0 * (a * b + c * w), 1.0 - 2.0 * (a * a + c * c), 2.0 * (b * c - a * w)],
            [2.0 * (a * c - b * w), 2.0 * (b * c + a * w), 1.0 - 2.0 * (a * a + b * b)],
        ];
        let shift = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        let mv = |cl: &PointCloud| {
            PointCloud::new(
                cl.points()
                    .iter()
                    .map(|p| std::array::from_fn(|i| dot(rot[i], *p) + shift[i]))
                    .collect(),
            )
            .unwrap()
        };
        let (cd, hd) = (chamfer(&x, &y).unwrap(), hausdorff(&x, &y).unwrap());
        assert!((chamfer(&mv(&x), &mv(&y)).unwrap() - cd).abs() < 1e-12);
        assert!((hausdorff(&mv(&x), &mv(&y)).unwrap() - hd).abs() < 1e-12);
    }
}

#[test]
fn empty_inputs_are_rejected() {
    // PointCloud itself refuses to be empty, so only the mesh side can be.
    assert!(PointCloud::new(vec![]).is_err());
    assert!(TriangleMesh::new(vec![[0.0; 3]], vec![]).is_ok_and(|m| {
        point_to_mesh(&PointCloud::new(vec![[0.0; 3]]).unwrap(), &m).is_err()
    }));
}

#[test]
fn mesh_validation() {
    let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]];
    assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).is_ok());
    assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 4]]).is_err());
    // collinear
    assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
    assert!(TriangleMesh::new(v, vec![[0, 0, 2]]).is_err());
}

#[test]
fn point_to_mesh_examples() {
    let tri = TriangleMesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    let p = PointCloud::new(vec![[0.25, 0.25, 1.0]]).unwrap();
    assert_eq!(point_to_mesh(&p, &tri).unwrap(), 1.0);
    let on_vertices = PointCloud::new(tri.vertices().to_vec()).unwrap();
    assert_eq!(point_to_mesh(&on_vertices, &tri).unwrap(), 0.0);
}

#[test]
fn point_to_mesh_matches_brute_force() {
    let mut r = rng::stream(5, 0);
    for _ in 0..30 {
        let nv = r.random_range(3..=40);
        let verts: Vec<Point3> = (0..nv)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let mut faces = Vec::new();
        while faces.len() < r.random_range(1..=128) {
            let f = [r.random_range(0..nv), r.random_range(0..nv), r.random_range(0..nv)];
            if TriangleMesh::new(verts.clone(), vec![f]).is_ok() {
                faces.push(f);
            }
        }
        let mesh = TriangleMesh::new(verts, faces).unwrap();
        let pts = random_cloud(&mut r, 64);
        let fast = point_to_mesh_distances(pts.points(), &mesh).unwrap();
        for (p, d) in pts.points().iter().zip(&fast) {
            let brute = (0..mesh.faces().len())
                .map(|f| brute_triangle_dist2(*p, mesh.triangle(f)))
                .fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() <= 1e-12 * brute.max(1.0), "{d} vs {brute}");
        }
    }
}

#[test]
fn analytic_surface_examples() {
    let s = AnalyticSurface::Sphere { radius: 1.0 };
    assert_eq!(s.distance([2.0, 0.0, 0.0]), 1.0);
    assert_eq!(s.distance([0.0, 0.0, 0.0]), 1.0);
    let t = AnalyticSurface::Torus { major: 1.0, minor: 0.25 };
    assert_eq!(t.distance([1.0, 0.0, 0.25]), 0.0);
    let b = AnalyticSurface::Box { half: [1.0, 2.0, 3.0] };
    assert_eq!(b.distance([0.0, 0.0, 0.0]), 1.0);
    assert_eq!(b.distance([2.0, 3.0, 3.0]), 2f64.sqrt());
    let c = AnalyticSurface::Capsule { radius: 0.5, half_length: 1.0 };
    assert_eq!(c.distance([0.0, 0.0, 2.0]), 0.5);
    assert_eq!(c.distance([1.0, 0.0, 0.3]), 0.5);
    let d = point_to_surface(&PointCloud::new(vec![[2.0, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap(), &s);
    assert_eq!(d.per_point, vec![1.0, 0.5]);
    assert_eq!(d.mean, 0.75);
    assert_eq!(d.mean_squared, 0.625);
}

#[test]
fn surface_points_are_close_to_a_refined_sphere_mesh() {
    let s = sample_shape(
        &ShapeSpec {
            kind: ShapeKind::Sphere { radius: 1.0 },
            points: 4000,
            sampler: Sampler::UniformArea,
            seed: 8,
        },
        false,
    )
    .unwrap();
    let p2m = point_to_mesh(&s.cloud, &icosphere(1.0, 4)).unwrap();
    assert!(p2m < 1e-4, "{p2m}");
}

#[test]
fn point_to_mesh_converges_under_refinement() {
    let mut r = rng::stream(9, 0);
    let pts = PointCloud::new(
        (0..500)
            .map(|_| {
                let v = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0f64)];
                scale(v, r.random_range(0.8..1.2) / norm(v))
            })
            .collect(),
    )
    .unwrap();
    let exact = point_to_surface(&pts, &AnalyticSurface::Sphere { radius: 1.0 }).mean_squared;
    let errs: Vec<f64> = (2..=5)
        .map(|k| (point_to_mesh(&pts, &icosphere(1.0, k)).unwrap() - exact).abs())
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    assert!(errs[3] < 1e-3 * exact, "{errs:?}");
}

#[test]
fn evaluation_normalizes_both_clouds() {
    let mut r = rng::stream(10, 0);
    let x = random_cloud(&mut r, 100);
    let y = random_cloud(&mut r, 120);
    let base = evaluate(&x, &y, Reference::None).unwrap();
    let scaled = |c: &PointCloud, s: f64, t: f64| PointCloud::new(c.points().iter().map(|p| p.map(|v| v * s + t)).collect()).unwrap();
    let moved = evaluate(&scaled(&x, 7.0, 3.0), &scaled(&y, 0.1, -2.0), Reference::None).unwrap();
    assert!((base.chamfer - moved.chamfer).abs() < 1e-12);
    assert!((base.hausdorff - moved.hausdorff).abs() < 1e-12);
    let same = evaluate(&x, &x, Reference::None).unwrap();
    assert_eq!((same.chamfer, same.hausdorff, same.p2m), (0.0, 0.0, None));
}

#[test]
fn evaluation_reference_follows_the_ground_truth_frame() {
    let kind = ShapeKind::Torus { major: 2.0, minor: 0.5 };
    let s = sample_shape(
        &ShapeSpec {
            kind,
            points: 1000,
            sampler: Sampler::UniformArea,
            seed: 1,
        },
        true,
    )
    .unwrap();
    let surf = evaluate(&s.cloud, &s.cloud, Reference::Surface(&s.surface)).unwrap();
    assert!(surf.p2m.unwrap() < 1e-20);
    let mesh = evaluate(&s.cloud, &s.cloud, Reference::Mesh(s.mesh.as_ref().unwrap())).unwrap();
    assert!(mesh.p2m.unwrap() < 1e-5);
    let text = surf.table();
    assert!(text.contains("CD(x1e4)") && text.contains("P2M(x1e5)"));
    let lines = surf.lines();
    assert!(lines.lines().any(|l| l.starts_with("cd_x1e4\t")));
    assert_eq!(lines.lines().count(), 3);
}
