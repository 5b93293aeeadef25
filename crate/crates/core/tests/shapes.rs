use gradfield::geometry::norm;
use gradfield::metrics::point_to_surface;
use gradfield::shapes::{sample_shape, Sampler, ShapeKind, ShapeSpec};

fn kinds() -> Vec<ShapeKind> {
    vec![
        ShapeKind::Sphere { radius: 1.0 },
        ShapeKind::Sphere { radius: 2.5 },
        ShapeKind::Torus { major: 1.0, minor: 0.4 },
        ShapeKind::Torus { major: 2.0, minor: 0.2 },
        ShapeKind::Box { half: [1.0, 0.75, 0.5] },
        ShapeKind::Capsule { radius: 0.5, half_length: 0.6 },
        ShapeKind::Capsule { radius: 0.3, half_length: 0.0 },
    ]
}

fn spec(kind: ShapeKind, points: usize, sampler: Sampler, seed: u64) -> ShapeSpec {
    ShapeSpec {
        kind,
        points,
        sampler,
        seed,
    }
}

/// Binomial proportion within `z` standard deviations.
fn proportion_ok(hits: usize, n: usize, p: f64, z: f64) -> bool {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    ((hits as f64 / n as f64) - p).abs() < z * sd
}

#[test]
fn samples_lie_on_the_surface() {
    for kind in kinds() {
        for sampler in [Sampler::UniformArea, Sampler::Stratified] {
            let s = sample_shape(&spec(kind, 2000, sampler, 3), false).unwrap();
            let d = point_to_surface(&s.cloud, &s.surface);
            let worst = d.per_point.iter().cloned().fold(0.0, f64::max);
            assert!(worst < 1e-9, "{kind:?} {sampler:?}: {worst}");
            assert_eq!(s.cloud.len(), 2000);
        }
    }
}

#[test]
fn unit_sphere_points_have_unit_norm() {
    let s = sample_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 5000, Sampler::UniformArea, 1), false).unwrap();
    for p in s.cloud.points() {
        assert!((norm(*p) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn box_points_lie_on_exactly_one_face() {
    let half = [1.0, 0.75, 0.5];
    let s = sample_shape(&spec(ShapeKind::Box { half }, 5000, Sampler::UniformArea, 2), false).unwrap();
    let mut per_face = [0usize; 6];
    for p in s.cloud.points() {
        let on: Vec<usize> = (0..3).filter(|&c| (p[c].abs() - half[c]).abs() < 1e-9).collect();
        assert_eq!(on.len(), 1, "{p:?}");
        for c in 0..3 {
            assert!(p[c].abs() <= half[c] + 1e-12);
        }
        let c = on[0];
        per_face[2 * c + usize::from(p[c] < 0.0)] += 1;
    }
    // face areas: yz, xz, xy pairs
    let areas = [0.375, 0.375, 0.5, 0.5, 0.75, 0.75];
    let total: f64 = areas.iter().sum();
    for (f, &a) in areas.iter().enumerate() {
        assert!(proportion_ok(per_face[f], 5000, a / total, 4.0), "face {f}: {}", per_face[f]);
    }
}

#[test]
fn sphere_octants_pass_chi_square() {
    let n = 100_000;
    let s = sample_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, n, Sampler::UniformArea, 11), false).unwrap();
    let mut counts = [0usize; 8];
    for p in s.cloud.points() {
        let o = usize::from(p[0] > 0.0) | usize::from(p[1] > 0.0) << 1 | usize::from(p[2] > 0.0) << 2;
        counts[o] += 1;
    }
    let expected = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 7 degrees of freedom
    assert!(chi2 < 18.475, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn torus_inner_half_gets_its_area_share() {
    let (major, minor) = (1.0, 0.4);
    let n = 40_000;
    let s = sample_shape(&spec(ShapeKind::Torus { major, minor }, n, Sampler::UniformArea, 5), false).unwrap();
    let inner = s
        .cloud
        .points()
        .iter()
        .filter(|p| (p[0] * p[0] + p[1] * p[1]).sqrt() < major)
        .count();
    // ∫ (R + r cos θ) dθ over θ ∈ [π/2, 3π/2] divided by 2πR
    let p = (std::f64::consts::PI * major - 2.0 * minor) / (2.0 * std::f64::consts::PI * major);
    assert!(proportion_ok(inner, n, p, 4.0), "inner fraction {}", inner as f64 / n as f64);
}

#[test]
fn capsule_caps_get_their_area_share() {
    let (radius, half_length) = (0.5, 0.6);
    let n = 40_000;
    let s = sample_shape(&spec(ShapeKind::Capsule { radius, half_length }, n, Sampler::UniformArea, 6), false).unwrap();
    let caps = s.cloud.points().iter().filter(|p| p[2].abs() > half_length).count();
    let p = radius / (radius + half_length);
    assert!(proportion_ok(caps, n, p, 4.0));
}

#[test]
fn stratified_sampling_is_evenly_spread() {
    // Stratified sphere samples should hit every octant almost exactly equally.
    let n = 8000;
    let s = sample_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, n, Sampler::Stratified, 4), false).unwrap();
    let upper = s.cloud.points().iter().filter(|p| p[2] > 0.0).count();
    assert!((upper as i64 - 4000).abs() <= 2, "{upper}");
}

#[test]
fn sampling_is_deterministic_per_seed() {
    for kind in kinds() {
        let a = sample_shape(&spec(kind, 300, Sampler::UniformArea, 9), false).unwrap();
        let b = sample_shape(&spec(kind, 300, Sampler::UniformArea, 9), false).unwrap();
        let c = sample_shape(&spec(kind, 300, Sampler::UniformArea, 10), false).unwrap();
        assert_eq!(a.cloud.points(), b.cloud.points());
        assert_ne!(a.cloud.points(), c.cloud.points());
    }
}

#[test]
fn meshes_follow_the_surface() {
    for kind in kinds() {
        let s = sample_shape(&spec(kind, 64, Sampler::UniformArea, 0), true).unwrap();
        let mesh = s.mesh.unwrap();
        let worst = mesh
            .vertices()
            .iter()
            .map(|v| s.surface.distance(*v))
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{kind:?}: {worst}");
        // closed surface: total area close to the analytic value
        let area: f64 = (0..mesh.faces().len())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                let u = gradfield::geometry::sub(b, a);
                let v = gradfield::geometry::sub(c, a);
                0.5 * norm([u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]])
            })
            .sum();
        assert!((area / kind.area() - 1.0).abs() < 0.01, "{kind:?}: {area} vs {}", kind.area());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = [
        ShapeKind::Sphere { radius: 0.0 },
        ShapeKind::Torus { major: 0.3, minor: 0.5 },
        ShapeKind::Box { half: [1.0, -1.0, 1.0] },
        ShapeKind::Capsule { radius: 0.5, half_length: -0.1 },
    ];
    for kind in bad {
        assert!(sample_shape(&spec(kind, 100, Sampler::UniformArea, 0), false).is_err());
    }
    assert!(sample_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 15, Sampler::UniformArea, 0), false).is_err());
    assert!(sample_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 16, Sampler::UniformArea, 0), false).is_ok());
}

#[test]
fn shape_names_parse() {
    assert_eq!("sphere".parse::<ShapeKind>().unwrap(), ShapeKind::Sphere { radius: 1.0 });
    assert_eq!(
        "torus:2,0.5".parse::<ShapeKind>().unwrap(),
        ShapeKind::Torus { major: 2.0, minor: 0.5 }
    );
    assert_eq!(
        "box:1,2,3".parse::<ShapeKind>().unwrap(),
        ShapeKind::Box { half: [1.0, 2.0, 3.0] }
    );
    assert!("cone".parse::<ShapeKind>().is_err());
    assert!("torus:1".parse::<ShapeKind>().is_err());
    assert!("sphere:x".parse::<ShapeKind>().is_err());
    assert!("torus:0.2,0.5".parse::<ShapeKind>().is_err());
}
