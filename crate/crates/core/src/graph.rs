//! kNN graphs with Gaussian edge weights, their combinatorial Laplacian, and
//! the smoothing solve `(I + λL) Z = X`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{dist2, Point3, PointCloud, SpatialIndex};

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Undirected kNN graph. An edge `i–j` exists when either endpoint is among
/// the other's `k` nearest neighbors; each pair is stored once with `i < j`.
#[derive(Clone, Debug)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub edges: Vec<(usize, usize, f64)>,
}

/// Build the graph with weights `exp(-‖xᵢ - xⱼ‖² / σ²)`. When `sigma` is
/// `None`, σ is the mean distance from each point to its k-th neighbor.
pub fn build_knn_graph(cloud: &PointCloud, k: usize, sigma: Option<f64>) -> Result<KnnGraph> {
    let points = cloud.points();
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::invalid_arg(format!("graph k = {k} must lie in 1..{n}")));
    }
    if let Some(s) = sigma {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid_arg(format!("sigma must be positive, got {s}")));
        }
    }
    let index = SpatialIndex::build(points.to_vec());
    let mut kth_sum = 0.0;
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let mut nbrs = index.knn(*p, k + 1)?;
        // drop self; with coincident duplicates self may not come first
        match nbrs.iter().position(|nb| nb.index == i) {
            Some(pos) => {
                nbrs.remove(pos);
            }
            None => {
                nbrs.pop();
            }
        }
        kth_sum += nbrs.last().map(|nb| nb.distance).unwrap_or(0.0);
        for nb in nbrs {
            let key = (i.min(nb.index), i.max(nb.index));
            pairs.entry(key).or_insert_with(|| dist2(points[key.0], points[key.1]));
        }
    }
    let sigma = match sigma {
        Some(s) => s,
        None => {
            let mean = kth_sum / n as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
    };
    let s2 = sigma * sigma;
    let edges = pairs
        .into_iter()
        .map(|((i, j), d2)| (i, j, (-d2 / s2).exp().max(f64::MIN_POSITIVE)))
        .collect();
    Ok(KnnGraph { n, k, sigma, edges })
}

/// Sparse symmetric `L = D - W` in compressed-row form.
#[derive(Clone, Debug)]
pub struct Laplacian {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

pub fn laplacian(graph: &KnnGraph) -> Laplacian {
    let n = graph.n;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut diag = vec![0.0; n];
    for &(i, j, w) in &graph.edges {
        rows[i].push((j, -w));
        rows[j].push((i, -w));
        diag[i] += w;
        diag[j] += w;
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for (i, mut row) in rows.into_iter().enumerate() {
        row.push((i, diag[i]));
        row.sort_by_key(|e| e.0);
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Laplacian {
        n,
        row_ptr,
        cols,
        vals,
        diag,
    }
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nonzero entries as `(row, col, value)`, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |e| (r, self.cols[e], self.vals[e]))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (r, c, v) in self.triplets() {
            m[r][c] += v;
        }
        m
    }

    /// `y = L x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[e] * x[self.cols[e]];
            }
            y[r] = s;
        }
    }

    /// `y = (I + λL) x`
    fn apply_shifted(&self, lambda: f64, x: &[f64], y: &mut [f64]) {
        self.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + lambda * *yi;
        }
    }
}

fn check_dims(l: &Laplacian, z: &[Point3]) -> Result<()> {
    if z.len() != l.n {
        return Err(Error::invalid_arg(format!(
            "signal has {} rows but the Laplacian is {}x{}",
            z.len(),
            l.n,
            l.n
        )));
    }
    Ok(())
}

/// `trace(Zᵀ L Z)`, summed over the three coordinate channels.
pub fn glr_value(l: &Laplacian, z: &[Point3]) -> Result<f64> {
    check_dims(l, z)?;
    let mut total = 0.0;
    let mut col = vec![0.0; l.n];
    let mut lz = vec![0.0; l.n];
    for c in 0..3 {
        for (dst, p) in col.iter_mut().zip(z) {
            *dst = p[c];
        }
        l.apply(&col, &mut lz);
        total += col.iter().zip(&lz).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total.max(0.0))
}

/// Residual target for [`solve_regularized`], measured as `‖(I+λL)Z − X‖_∞`.
/// For very large `λ` the target is raised to the rounding floor of the
/// product, `8·√n·ε·(‖I+λL‖_∞‖Z‖_∞ + ‖X‖_∞)`.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Solve `(I + λL) Z = X` column by column with Jacobi-preconditioned
/// conjugate gradients. `λ = 0` returns `X` unchanged.
pub fn solve_regularized(l: &Laplacian, x: &[Point3], lambda: f64) -> Result<Vec<Point3>> {
    check_dims(l, x)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid_arg(format!("lambda must be non-negative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(x.to_vec());
    }
    let n = l.n;
    let mut z = x.to_vec();
    let mut rhs = vec![0.0; n];
    for c in 0..3 {
        for (dst, p) in rhs.iter_mut().zip(x) {
            *dst = p[c];
        }
        let sol = conjugate_gradient(l, lambda, &rhs)?;
        for (p, v) in z.iter_mut().zip(sol) {
            p[c] = v;
        }
    }
    Ok(z)
}

fn conjugate_gradient(l: &Laplacian, lambda: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let inv_diag: Vec<f64> = l.diag.iter().map(|d| 1.0 / (1.0 + lambda * d)).collect();
    let max_iter = 10 * n + 200;
    let mut x = b.to_vec();
    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let norm_a = 1.0 + 2.0 * lambda * l.diag.iter().fold(0.0f64, |m, &d| m.max(d));
    let norm_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 8.0 * (n as f64).sqrt() * f64::EPSILON;
    let mut target = SOLVE_TOLERANCE;
    // Outer loop recomputes the true residual so rounding drift in the
    // recurrence cannot fake convergence.
    loop {
        l.apply_shifted(lambda, &x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let norm_x = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        target = target.max(floor * (norm_a * norm_x + norm_b));
        if res < target {
            return Ok(x);
        }
        if iterations >= max_iter {
            return Err(Error::NumericalFailure {
                iterations,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
            p[i] = z[i];
        }
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let inner_budget = (n + 50).min(max_iter - iterations);
        for _ in 0..inner_budget {
            iterations += 1;
            l.apply_shifted(lambda, &p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            let mut rmax = 0.0f64;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
                rmax = rmax.max(r[i].abs());
            }
            if rmax < 0.1 * target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = crate::rng::stream(seed, 0);
        (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect()
    }

    fn two_node_graph(w: f64) -> KnnGraph {
        KnnGraph {
            n: 2,
            k: 1,
            sigma: 1.0,
            edges: vec![(0, 1, w)],
        }
    }

    #[test]
    fn weight_at_sigma_is_e_inverse() {
        let c = PointCloud::new(vec![[0.0; 3], [0.3, 0.0, 0.0]]).unwrap();
        let g = build_knn_graph(&c, 1, Some(0.3)).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].2 - (-1.0f64).exp()).abs() < 1e-15);
        let c = PointCloud::new(vec![[1.0; 3], [1.0; 3], [2.0; 3]]).unwrap();
        let g = build_knn_graph(&c, 1, Some(0.5)).unwrap();
        assert!(g.edges.iter().any(|e| (e.0, e.1) == (0, 1) && e.2 == 1.0));
        assert!(build_knn_graph(&c, 3, None).is_err());
    }

    #[test]
    fn adjacency_is_symmetrized_knn() {
        let pts = random_points(32, 1);
        let g = build_knn_graph(&PointCloud::new(pts.clone()).unwrap(), 4, None).unwrap();
        let mut want = std::collections::BTreeSet::new();
        for i in 0..32 {
            let mut d: Vec<(f64, usize)> =
                (0..32).filter(|&j| j != i).map(|j| (dist2(pts[i], pts[j]), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in &d[..4] {
                want.insert((i.min(j), i.max(j)));
            }
        }
        let got: std::collections::BTreeSet<_> = g.edges.iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(got, want);
        assert!(g.edges.iter().all(|e| e.0 < e.1 && e.2 > 0.0 && e.2 <= 1.0));
    }

    #[test]
    fn small_laplacians() {
        let l = laplacian(&two_node_graph(1.0));
        assert_eq!(l.to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let empty = KnnGraph {
            n: 3,
            k: 1,
            sigma: 1.0,
            edges: vec![],
        };
        assert!(laplacian(&empty).to_dense().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_psd() {
        let pts = random_points(100, 2);
        let l = laplacian(&build_knn_graph(&PointCloud::new(pts).unwrap(), 6, None).unwrap());
        for row in l.to_dense() {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        let mut rng = crate::rng::stream(3, 0);
        for _ in 0..100 {
            let v: Vec<f64> = (0..100).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut lv = vec![0.0; 100];
            l.apply(&v, &mut lv);
            let q: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-10);
        }
    }

    #[test]
    fn quadratic_form_equals_edge_sum() {
        let pts = random_points(50, 4);
        let g = build_knn_graph(&PointCloud::new(pts).unwrap(), 5, None).unwrap();
        let l = laplacian(&g);
        let z = random_points(50, 5);
        let edge_sum: f64 = g.edges.iter().map(|&(i, j, w)| w * dist2(z[i], z[j])).sum();
        assert!((glr_value(&l, &z).unwrap() - edge_sum).abs() < 1e-10);
    }

    #[test]
    fn glr_examples() {
        let l = laplacian(&two_node_graph(1.0));
        assert_eq!(glr_value(&l, &[[0.0; 3], [2.0, 0.0, 0.0]]).unwrap(), 4.0);
        assert_eq!(glr_value(&l, &[[3.0, 1.0, 2.0]; 2]).unwrap(), 0.0);
        assert!(matches!(glr_value(&l, &[[0.0; 3]]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn two_node_solve() {
        let l = laplacian(&two_node_graph(1.0));
        let z = solve_regularized(&l, &[[0.0; 3], [2.0; 3]], 1.0).unwrap();
        for c in 0..3 {
            assert!((z[0][c] - 2.0 / 3.0).abs() < 1e-12);
            assert!((z[1][c] - 4.0 / 3.0).abs() < 1e-12);
        }
        let x = [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        assert_eq!(solve_regularized(&l, &x, 0.0).unwrap(), x.to_vec());
        assert!(solve_regularized(&l, &x, -1.0).is_err());
    }
}
