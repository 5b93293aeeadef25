use gradfield::graph::{build_knn_graph, glr_value, laplacian, solve_regularized, KnnGraph};
use gradfield::{rng, Point3, PointCloud};
use rand::Rng;

fn cloud(n: usize, seed: u64) -> PointCloud {
    let mut r = rng::stream(seed, 0);
    PointCloud::new(
        (0..n)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect(),
    )
    .unwrap()
}

/// Gaussian elimination with partial pivoting on `(I + λL)`, one column per axis.
fn dense_solve(g: &KnnGraph, x: &[Point3], lambda: f64) -> Vec<Point3> {
    let n = g.n;
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(i, j, w) in &g.edges {
        a[i][i] += lambda * w;
        a[j][j] += lambda * w;
        a[i][j] -= lambda * w;
        a[j][i] -= lambda * w;
    }
    let mut b: Vec<Point3> = x.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for c in 0..3 {
                b[row][c] -= f * b[col][c];
            }
        }
    }
    let mut z = vec![[0.0; 3]; n];
    for row in (0..n).rev() {
        for c in 0..3 {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * z[k][c]).sum();
            z[row][c] = (b[row][c] - s) / a[row][row];
        }
    }
    z
}

#[test]
fn solve_matches_dense_inversion() {
    let mut r = rng::stream(1, 1);
    for trial in 0..30 {
        let n = r.random_range(10..=64);
        let c = cloud(n, 100 + trial);
        let g = build_knn_graph(&c, r.random_range(1..=8.min(n - 1)), None).unwrap();
        let lambda = 10f64.powf(r.random_range(-3.0..1.0));
        let z = solve_regularized(&laplacian(&g), c.points(), lambda).unwrap();
        let d = dense_solve(&g, c.points(), lambda);
        for (a, b) in z.iter().zip(&d) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8, "trial {trial}");
            }
        }
    }
}

#[test]
fn zero_lambda_returns_input_exactly() {
    let c = cloud(50, 2);
    let l = laplacian(&build_knn_graph(&c, 8, None).unwrap());
    assert_eq!(solve_regularized(&l, c.points(), 0.0).unwrap(), c.points());
}

#[test]
fn huge_lambda_collapses_to_the_mean() {
    let c = cloud(60, 3);
    let l = laplacian(&build_knn_graph(&c, 8, None).unwrap());
    let z = solve_regularized(&l, c.points(), 1e6).unwrap();
    let n = c.len() as f64;
    let mean: Point3 = std::array::from_fn(|k| c.points().iter().map(|p| p[k]).sum::<f64>() / n);
    for p in &z {
        for k in 0..3 {
            assert!((p[k] - mean[k]).abs() < 1e-3);
        }
    }
}

#[test]
fn smoothing_never_increases_the_prior() {
    for seed in 0..10 {
        let c = cloud(200, 10 + seed);
        let l = laplacian(&build_knn_graph(&c, 6, None).unwrap());
        let before = glr_value(&l, c.points()).unwrap();
        for lambda in [0.01, 0.1, 1.0] {
            let z = solve_regularized(&l, c.points(), lambda).unwrap();
            assert!(glr_value(&l, &z).unwrap() <= before);
        }
    }
}

#[test]
fn glr_matches_the_dense_quadratic_form() {
    let c = cloud(40, 4);
    let l = laplacian(&build_knn_graph(&c, 5, None).unwrap());
    let dense = l.to_dense();
    let mut r = rng::stream(4, 1);
    let z: Vec<Point3> = (0..40).map(|_| [r.random(), r.random(), r.random()]).collect();
    let mut expected = 0.0;
    for k in 0..3 {
        for i in 0..40 {
            for j in 0..40 {
                expected += z[i][k] * dense[i][j] * z[j][k];
            }
        }
    }
    assert!((glr_value(&l, &z).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn residual_is_small_up_to_512_points() {
    for (n, k) in [(128, 4), (256, 8), (512, 8), (512, 16)] {
        let c = cloud(n, n as u64 + k as u64);
        let l = laplacian(&build_knn_graph(&c, k, None).unwrap());
        let z = solve_regularized(&l, c.points(), 0.5).unwrap();
        let mut lz = vec![0.0; n];
        for axis in 0..3 {
            let col: Vec<f64> = z.iter().map(|p| p[axis]).collect();
            l.apply(&col, &mut lz);
            for i in 0..n {
                let res = col[i] + 0.5 * lz[i] - c.points()[i][axis];
                assert!(res.abs() < 1e-8);
            }
        }
    }
}
