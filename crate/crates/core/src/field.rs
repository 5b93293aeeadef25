//! The gradient field network.
//!
//! Three pieces, applied to a context cloud `X_C` and a query position `x`:
//!
//! * `H`: three edge-convolution layers over the static k-nearest-neighbor
//!   graph of the context. Layer 1 sees relative coordinates only, layers 2
//!   and 3 see `[h_i ; h_j − h_i]`. Each layer is linear, ReLU, then a max over
//!   the neighbors, and the three outputs are concatenated into `h_i`.
//!   With a single linear map the edge message splits as `U_i + V_j`, and
//!   `max_j relu(U_i + V_j) = relu(U_i + max_j V_j)`, so only per-point
//!   products and a per-channel max over gathered `V` rows are formed.
//! * `F`: for each context point `x_j` within radius `r` of `x` (at most
//!   `k_max` of them), `f_j = MLP([x − x_j ; h_j])`, aggregated as
//!   `F(x) = Σ_j w_j f_j` with cosine weights `w_j = ½(cos(π‖x − x_j‖/r) + 1)`.
//! * `M`: an MLP from `F(x)` to the 3-vector `g(x)`.
//!
//! Offsets are measured in units of `r` and `g` is returned scaled by `r`, so
//! the network sees the same numbers whatever the sampling density of the
//! cloud. With no context point inside the radius `F(x) = 0` and
//! `g(x) = r · M(0)`.
//!
//! The first layer of `F` is split into its offset and feature halves. The
//! feature half `W_h h_j + b` depends on the context point only and is
//! computed once per context point instead of once per (query, neighbor)
//! pair. Because the last layer of `F` is linear, the weighted sum is pushed
//! through it: `Σ w_j (W₂ a_j + b₂) = W₂ Σ w_j a_j + (Σ w_j) b₂`.

use std::rc::Rc;

use crate::autodiff::{glorot_uniform, ParameterSet, Segments, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{self, Point3, PointCloud, SpatialIndex};
use crate::rng;

/// How the aggregation radius is chosen for a context cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadiusPolicy {
    /// `r = factor × mean nearest-neighbor spacing` of the context.
    SpacingMultiple(f64),
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    /// Neighbors per point in the edge convolutions.
    pub k_feat: usize,
    pub edge_widths: [usize; 3],
    pub f_hidden: usize,
    pub m_hidden: usize,
    pub radius: RadiusPolicy,
    /// Maximum number of context points aggregated per query.
    pub k_max: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            k_feat: 16,
            edge_widths: [32, 32, 32],
            f_hidden: 128,
            m_hidden: 64,
            radius: RadiusPolicy::SpacingMultiple(3.0),
            k_max: 32,
        }
    }
}

impl FieldConfig {
    /// Width of the concatenated context feature `h_i`.
    pub fn feature_width(&self) -> usize {
        self.edge_widths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.k_feat > 0
            && self.edge_widths.iter().all(|&w| w > 0)
            && self.f_hidden > 0
            && self.m_hidden > 0
            && self.k_max > 0;
        let radius_ok = match self.radius {
            RadiusPolicy::SpacingMultiple(f) | RadiusPolicy::Fixed(f) => f.is_finite() && f > 0.0,
        };
        if !positive || !radius_ok {
            return Err(Error::invalid_arg(format!("invalid field configuration {self:?}")));
        }
        Ok(())
    }

    /// Parameter names and shapes, in construction order.
    pub fn parameter_shapes(&self) -> Vec<(String, [usize; 2])> {
        let [w1, w2, w3] = self.edge_widths;
        let hc = self.feature_width();
        let fh = self.f_hidden;
        let mh = self.m_hidden;
        let mut v = vec![
            ("h0.w", [w1, 3]),
            ("h0.b", [1, w1]),
            ("h1.wc", [w2, w1]),
            ("h1.wd", [w2, w1]),
            ("h1.b", [1, w2]),
            ("h2.wc", [w3, w1 + w2]),
            ("h2.wd", [w3, w1 + w2]),
            ("h2.b", [1, w3]),
            ("f0.wd", [fh, 3]),
            ("f0.wh", [fh, hc]),
            ("f0.b", [1, fh]),
            ("f1.w", [fh, fh]),
            ("f1.b", [1, fh]),
            ("m0.w", [mh, fh]),
            ("m0.b", [1, mh]),
            ("m1.w", [3, mh]),
            ("m1.b", [1, 3]),
        ];
        v.sort_by_key(|(n, _)| *n);
        v.into_iter().map(|(n, s)| (n.to_string(), s)).collect()
    }
}

/// Learnable parameters of `H`, `F` and `M` plus the architecture they fit.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientFieldModel {
    config: FieldConfig,
    params: ParameterSet,
}

/// Whether a forward pass records parameter gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

impl GradientFieldModel {
    /// Fresh model: Glorot-uniform weights and zero biases.
    pub fn new(config: FieldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, 0);
        let mut params = ParameterSet::new();
        for (name, [rows, cols]) in config.parameter_shapes() {
            let value = if name.ends_with(".b") {
                Tensor::zeros(rows, cols)
            } else {
                glorot_uniform(rows, cols, &mut r)
            };
            params.insert(name, value)?;
        }
        Ok(GradientFieldModel { config, params })
    }

    /// Wrap loaded parameters, checking names and shapes against `config`.
    pub fn from_parameters(config: FieldConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if params.len() != shapes.len() {
            return Err(Error::invalid_input(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for (name, shape) in &shapes {
            let p = params
                .get(name)
                .ok_or_else(|| Error::invalid_input(format!("missing parameter '{name}'")))?;
            if p.value.shape() != *shape {
                return Err(Error::invalid_input(format!(
                    "parameter '{name}' has shape {:?}, expected {shape:?}",
                    p.value.shape()
                )));
            }
            if !p.value.is_finite() {
                return Err(Error::invalid_input(format!("parameter '{name}' is not finite")));
            }
        }
        Ok(GradientFieldModel { config, params })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Aggregation radius for a context cloud. A cloud with zero spacing
    /// (all points coincident) falls back to 1.
    pub fn radius_for(&self, context: &[Point3]) -> f64 {
        radius_for(&self.config, context)
    }

    fn bind(&self, tape: &mut Tape, mode: Mode, name: &str) -> Result<Var> {
        match mode {
            Mode::Train => tape.param(&self.params, name),
            Mode::Inference => tape.param_frozen(&self.params, name),
        }
    }
}

/// Aggregation radius that `config` assigns to a context cloud.
pub fn radius_for(config: &FieldConfig, context: &[Point3]) -> f64 {
    match config.radius {
        RadiusPolicy::Fixed(r) => r,
        RadiusPolicy::SpacingMultiple(f) => {
            let s = geometry::mean_spacing(context);
            if s > 0.0 && s.is_finite() {
                f * s
            } else {
                1.0
            }
        }
    }
}

/// `½(cos(π·dist/r) + 1)` for `dist ≤ r`, 0 beyond.
pub fn cosine_weight(dist: f64, r: f64) -> f64 {
    crate::autodiff::cosine_window(dist, r)
}

/// Per-point features of a context cloud, frozen for one restoration run.
#[derive(Clone, Debug)]
pub struct ContextFeatures {
    index: SpatialIndex,
    radius: f64,
    /// `h_i`, one row per context point.
    features: Tensor,
    /// `W_h h_i + b` of the first layer of `F`.
    projected: Tensor,
}

impl ContextFeatures {
    pub fn points(&self) -> &[Point3] {
        self.index.points()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }
}

/// Context kNN graph: `k` neighbors per point, self excluded.
pub(crate) struct EdgeGraph {
    neighbor: Rc<Vec<usize>>,
    seg: Segments,
}

pub(crate) fn context_graph(index: &SpatialIndex, k: usize) -> Result<EdgeGraph> {
    let pts = index.points();
    if pts.len() < k + 1 {
        return Err(Error::invalid_arg(format!(
            "context has {} points; feature extraction needs at least {}",
            pts.len(),
            k + 1
        )));
    }
    let mut neighbor = Vec::with_capacity(pts.len() * k);
    for (i, &p) in pts.iter().enumerate() {
        let nb = index.knn(p, k + 1)?;
        neighbor.extend(nb.iter().filter(|n| n.index != i).take(k).map(|n| n.index));
    }
    Ok(EdgeGraph {
        neighbor: Rc::new(neighbor),
        seg: Segments::uniform(pts.len(), k),
    })
}

/// `relu(U_i + max_{j ∈ N(i)} V_j)`
fn edge_max(tape: &mut Tape, u: Var, v: Var, graph: &EdgeGraph) -> Result<Var> {
    let vj = tape.gather(v, graph.neighbor.clone())?;
    let m = tape.max_over_set(vj, &graph.seg)?;
    let s = tape.add(u, m)?;
    Ok(tape.relu(s))
}

/// Differentiable `H`: returns the `N × h_c` feature matrix.
pub(crate) fn context_forward(
    tape: &mut Tape,
    model: &GradientFieldModel,
    mode: Mode,
    points: &[Point3],
    graph: &EdgeGraph,
    radius: f64,
) -> Result<Var> {
    // Layer 1 acts on (x_j − x_i)/r. Centering first keeps the split
    // products well conditioned for clouds far from the origin.
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    let scaled: Vec<Point3> = points
        .iter()
        .map(|&p| geometry::scale(geometry::sub(p, c), 1.0 / radius))
        .collect();
    let pos = tape.constant(Tensor::from_rows(&scaled));
    let neg = tape.scale(pos, -1.0);
    let w = model.bind(tape, mode, "h0.w")?;
    let b = model.bind(tape, mode, "h0.b")?;
    let u = tape.linear(w, Some(b), neg)?;
    let v = tape.linear(w, None, pos)?;
    let mut layers = vec![edge_max(tape, u, v, graph)?];

    // Layers 2 and 3: W_c h_i + W_d (h_j − h_i) + b = (W_c − W_d) h_i + W_d h_j + b.
    for l in 1..3 {
        let h = if layers.len() == 1 {
            layers[0]
        } else {
            tape.concat(&layers)?
        };
        let wc = model.bind(tape, mode, &format!("h{l}.wc"))?;
        let wd = model.bind(tape, mode, &format!("h{l}.wd"))?;
        let b = model.bind(tape, mode, &format!("h{l}.b"))?;
        let wu = tape.sub(wc, wd)?;
        let u = tape.linear(wu, Some(b), h)?;
        let v = tape.linear(wd, None, h)?;
        layers.push(edge_max(tape, u, v, graph)?);
    }
    tape.concat(&layers)
}

/// Radius neighborhoods of a batch of queries.
pub(crate) struct QueryEdges {
    pub query: Rc<Vec<usize>>,
    pub context: Rc<Vec<usize>>,
    pub seg: Rc<Segments>,
}

pub(crate) fn query_edges(
    index: &SpatialIndex,
    queries: &[Point3],
    radius: f64,
    k_max: usize,
) -> Result<QueryEdges> {
    let mut query = Vec::new();
    let mut context = Vec::new();
    let mut lengths = Vec::with_capacity(queries.len());
    for (q, &x) in queries.iter().enumerate() {
        let nb = index.radius_neighbors(x, radius, k_max)?;
        lengths.push(nb.len());
        for n in nb {
            query.push(q);
            context.push(n.index);
        }
    }
    Ok(QueryEdges {
        query: Rc::new(query),
        context: Rc::new(context),
        seg: Rc::new(Segments::from_lengths(lengths)),
    })
}

/// Differentiable `F` given the projected context table `W_h h + b`.
/// Returns the `Q × f_hidden` aggregated feature.
#[allow(clippy::too_many_arguments)]
pub(crate) fn aggregate_forward(
    tape: &mut Tape,
    model: &GradientFieldModel,
    mode: Mode,
    table: Var,
    context_points: Var,
    queries: Var,
    edges: &QueryEdges,
    radius: f64,
) -> Result<Var> {
    let xq = tape.gather(queries, edges.query.clone())?;
    let xc = tape.gather(context_points, edges.context.clone())?;
    let d = tape.sub(xq, xc)?;
    let d = tape.scale(d, 1.0 / radius);
    let w = tape.cosine_weight(d, 1.0)?;
    let wd = model.bind(tape, mode, "f0.wd")?;
    let a = tape.neighbor_aggregate(table, d, wd, w, edges.context.clone(), edges.seg.clone())?;
    let w1 = model.bind(tape, mode, "f1.w")?;
    let b1 = model.bind(tape, mode, "f1.b")?;
    let fa = tape.linear(w1, None, a)?;
    let ones = tape.constant(Tensor::filled(edges.query.len(), 1, 1.0));
    let total = tape.sum_weighted(w, ones, edges.seg.clone())?;
    let fb = tape.scaled_bias(total, b1)?;
    tape.add(fa, fb)
}

/// Differentiable `M`, scaled back by `r`.
pub(crate) fn head_forward(
    tape: &mut Tape,
    model: &GradientFieldModel,
    mode: Mode,
    aggregated: Var,
    radius: f64,
) -> Result<Var> {
    let w0 = model.bind(tape, mode, "m0.w")?;
    let b0 = model.bind(tape, mode, "m0.b")?;
    let w1 = model.bind(tape, mode, "m1.w")?;
    let b1 = model.bind(tape, mode, "m1.b")?;
    let z = tape.linear(w0, Some(b0), aggregated)?;
    let z = tape.relu(z);
    let g = tape.linear(w1, Some(b1), z)?;
    Ok(tape.scale(g, radius))
}

pub(crate) fn project_table(
    tape: &mut Tape,
    model: &GradientFieldModel,
    mode: Mode,
    features: Var,
) -> Result<Var> {
    let wh = model.bind(tape, mode, "f0.wh")?;
    let b = model.bind(tape, mode, "f0.b")?;
    tape.linear(wh, Some(b), features)
}

/// Records the whole network for a context and a batch of queries on `tape`.
pub struct FieldGraph {
    /// `g(x)` per query, `Q × 3`.
    pub gradient: Var,
    /// `F(x)` per query.
    pub aggregated: Var,
    /// Context features `h`.
    pub features: Var,
    /// Query positions (a tape variable, so `∂/∂x` is available).
    pub queries: Var,
    pub radius: f64,
}

/// Full differentiable forward pass from raw context coordinates.
pub fn forward(
    tape: &mut Tape,
    model: &GradientFieldModel,
    mode: Mode,
    context: &[Point3],
    queries: &[Point3],
    radius: Option<f64>,
) -> Result<FieldGraph> {
    let radius = radius.unwrap_or_else(|| model.radius_for(context));
    check_radius(radius)?;
    let index = SpatialIndex::build(context.to_vec());
    let graph = context_graph(&index, model.config.k_feat)?;
    let features = context_forward(tape, model, mode, context, &graph, radius)?;
    let table = project_table(tape, model, mode, features)?;
    let ctx = tape.constant(Tensor::from_rows(context));
    let q = tape.variable(Tensor::from_rows(queries));
    let edges = query_edges(&index, queries, radius, model.config.k_max)?;
    let aggregated = aggregate_forward(tape, model, mode, table, ctx, q, &edges, radius)?;
    let gradient = head_forward(tape, model, mode, aggregated, radius)?;
    Ok(FieldGraph {
        gradient,
        aggregated,
        features,
        queries: q,
        radius,
    })
}

fn check_radius(r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid_arg(format!("radius {r} must be positive and finite")));
    }
    Ok(())
}

/// Compute `h_i` for every context point, with the radius from the model's policy.
pub fn extract_context_features(model: &GradientFieldModel, context: &PointCloud) -> Result<ContextFeatures> {
    let r = model.radius_for(context.points());
    extract_context_features_with_radius(model, context, r)
}

pub fn extract_context_features_with_radius(
    model: &GradientFieldModel,
    context: &PointCloud,
    radius: f64,
) -> Result<ContextFeatures> {
    check_radius(radius)?;
    let index = SpatialIndex::build(context.points().to_vec());
    let graph = context_graph(&index, model.config.k_feat)?;
    let mut tape = Tape::new();
    let h = context_forward(&mut tape, model, Mode::Inference, context.points(), &graph, radius)?;
    let p = project_table(&mut tape, model, Mode::Inference, h)?;
    let features = tape.value(h).clone();
    let projected = tape.value(p).clone();
    Ok(ContextFeatures {
        index,
        radius,
        features,
        projected,
    })
}

fn infer(model: &GradientFieldModel, xs: &[Point3], ctx: &ContextFeatures, head: bool) -> Result<Tensor> {
    let mut tape = Tape::new();
    let table = tape.constant(ctx.projected.clone());
    let cp = tape.constant(Tensor::from_rows(ctx.points()));
    let q = tape.constant(Tensor::from_rows(xs));
    let edges = query_edges(&ctx.index, xs, ctx.radius, model.config.k_max)?;
    let mut out = aggregate_forward(&mut tape, model, Mode::Inference, table, cp, q, &edges, ctx.radius)?;
    if head {
        out = head_forward(&mut tape, model, Mode::Inference, out, ctx.radius)?;
    }
    Ok(tape.value(out).clone())
}

/// `g(x)` for a batch of query positions.
pub fn estimate_gradients(model: &GradientFieldModel, xs: &[Point3], ctx: &ContextFeatures) -> Result<Vec<Point3>> {
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    Ok(infer(model, xs, ctx, true)?.to_points())
}

pub fn estimate_gradient(model: &GradientFieldModel, x: Point3, ctx: &ContextFeatures) -> Result<Point3> {
    Ok(estimate_gradients(model, &[x], ctx)?[0])
}

/// The aggregated feature `F(x)` before the head.
pub fn aggregated_feature(model: &GradientFieldModel, x: Point3, ctx: &ContextFeatures) -> Result<Vec<f64>> {
    Ok(infer(model, &[x], ctx, false)?.into_data())
}
