use std::rc::Rc;

use gradfield::autodiff::{glorot_uniform, sgd_step, zero_grad, Adam, ParameterSet, Segments, Tape, Tensor};
use gradfield::rng;
use rand::Rng;

fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
}

fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    t(rows, cols, &(0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

#[test]
fn relu_values_and_dead_gradient() {
    let mut tape = Tape::new();
    let x = tape.variable(t(1, 2, &[-1.0, 2.0]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    let s = tape.sum(y);
    tape.backward(s, &mut ParameterSet::new()).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn mse_of_identical_inputs() {
    let mut tape = Tape::new();
    let x = tape.variable(t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let y = tape.constant(t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let l = tape.mse(x, y).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
    tape.backward(l, &mut ParameterSet::new()).unwrap();
    assert!(tape.grad(x).unwrap().data().iter().all(|&g| g == 0.0));
}

#[test]
fn square_gradient() {
    // x² at x = 3 via mse against zero: mse over one row of one column is x².
    let mut params = ParameterSet::new();
    params.insert("x", Tensor::scalar(3.0)).unwrap();
    let mut tape = Tape::new();
    let x = tape.param(&params, "x").unwrap();
    let z = tape.constant(Tensor::scalar(0.0));
    let l = tape.mse(x, z).unwrap();
    assert_eq!(tape.value(l).item(), 9.0);
    tape.backward(l, &mut params).unwrap();
    assert_eq!(params.get("x").unwrap().grad.item(), 6.0);
}

#[test]
fn linear_matches_dense_product() {
    let mut r = rng::stream(1, 0);
    let (w, b, x) = (random_tensor(4, 5, &mut r), random_tensor(1, 4, &mut r), random_tensor(3, 5, &mut r));
    let mut tape = Tape::new();
    let (wv, bv, xv) = (tape.constant(w.clone()), tape.constant(b.clone()), tape.constant(x.clone()));
    let y = tape.linear(wv, Some(bv), xv).unwrap();
    for i in 0..3 {
        for o in 0..4 {
            let want: f64 = (0..5).map(|c| w.get(o, c) * x.get(i, c)).sum::<f64>() + b.get(0, o);
            assert!((tape.value(y).get(i, o) - want).abs() < 1e-14);
        }
    }
}

#[test]
fn shape_mismatches_are_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(3, 2));
    assert!(tape.add(a, b).is_err());
    assert!(tape.linear(b, None, a).is_err());
    assert!(tape.mse(a, b).is_err());
    let c = tape.constant(Tensor::zeros(3, 3));
    assert!(tape.concat(&[a, c]).is_err());
    assert!(tape.max_over_set(a, &Segments::uniform(1, 3)).is_err());
}

#[test]
fn backward_requires_scalar() {
    let mut tape = Tape::new();
    let a = tape.variable(Tensor::zeros(2, 1));
    assert!(tape.backward(a, &mut ParameterSet::new()).is_err());
}

#[test]
fn max_over_set_ties_route_to_lowest_index() {
    let mut tape = Tape::new();
    let x = tape.variable(t(3, 1, &[2.0, 2.0, 1.0]));
    let m = tape.max_over_set(x, &Segments::uniform(1, 3)).unwrap();
    assert_eq!(tape.value(m).item(), 2.0);
    tape.backward(m, &mut ParameterSet::new()).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn sum_weighted_constant_weights_get_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.variable(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let w = tape.constant(t(3, 1, &[0.5, 1.0, 2.0]));
    let seg = Rc::new(Segments::from_lengths([2, 1]));
    let y = tape.sum_weighted(w, x, seg).unwrap();
    assert_eq!(tape.value(y).data(), &[3.5, 5.0, 10.0, 12.0]);
    let s = tape.sum(y);
    tape.backward(s, &mut ParameterSet::new()).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[0.5, 0.5, 1.0, 1.0, 2.0, 2.0]);
    assert!(tape.grad(w).is_none());
}

struct Mlp {
    params: ParameterSet,
    x: Tensor,
    target: Tensor,
}

fn random_mlp(seed: u64) -> Mlp {
    let mut r = rng::stream(seed, 0);
    let mut params = ParameterSet::new();
    params.insert("l1.w", glorot_uniform(7, 4, &mut r)).unwrap();
    params.insert("l1.b", random_tensor(1, 7, &mut r)).unwrap();
    params.insert("l2.w", glorot_uniform(3, 7, &mut r)).unwrap();
    params.insert("l2.b", random_tensor(1, 3, &mut r)).unwrap();
    Mlp {
        params,
        x: random_tensor(5, 4, &mut r),
        target: random_tensor(5, 3, &mut r),
    }
}

fn mlp_loss(params: &mut ParameterSet, x: &Tensor, target: &Tensor, scale: f64, backward: bool) -> f64 {
    let mut tape = Tape::new();
    let w1 = tape.param(params, "l1.w").unwrap();
    let b1 = tape.param(params, "l1.b").unwrap();
    let w2 = tape.param(params, "l2.w").unwrap();
    let b2 = tape.param(params, "l2.b").unwrap();
    let xv = tape.constant(x.clone());
    let h = tape.linear(w1, Some(b1), xv).unwrap();
    let h = tape.relu(h);
    let y = tape.linear(w2, Some(b2), h).unwrap();
    let tv = tape.constant(target.clone());
    let l = tape.mse(y, tv).unwrap();
    let l = tape.scale(l, scale);
    if backward {
        tape.backward(l, params).unwrap();
    }
    tape.value(l).item()
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    for seed in 0..10 {
        let Mlp { mut params, x, target } = random_mlp(seed);
        mlp_loss(&mut params, &x, &target, 1.0, true);
        let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let n = params.get(&name).unwrap().value.len();
            for i in 0..n {
                let analytic = params.get(&name).unwrap().grad.data()[i];
                let p0 = params.get(&name).unwrap().value.data()[i];
                let h = 1e-4 * p0.abs().max(1.0);
                params.get_mut(&name).unwrap().value.data_mut()[i] = p0 + h;
                let lp = mlp_loss(&mut params, &x, &target, 1.0, false);
                params.get_mut(&name).unwrap().value.data_mut()[i] = p0 - h;
                let lm = mlp_loss(&mut params, &x, &target, 1.0, false);
                params.get_mut(&name).unwrap().value.data_mut()[i] = p0;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-3, "seed {seed} {name}[{i}]: analytic {analytic} fd {fd}");
            }
        }
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let Mlp { mut params, x, target } = random_mlp(3);
    let mut doubled = params.clone();
    mlp_loss(&mut params, &x, &target, 1.0, true);
    mlp_loss(&mut doubled, &x, &target, 2.0, true);
    for ((_, a), (_, b)) in params.iter().zip(doubled.iter()) {
        for (ga, gb) in a.grad.data().iter().zip(b.grad.data()) {
            assert!((2.0 * ga - gb).abs() <= 1e-12 * gb.abs().max(1.0));
        }
    }
}

#[test]
fn repeated_backward_accumulates() {
    let Mlp { mut params, x, target } = random_mlp(4);
    mlp_loss(&mut params, &x, &target, 1.0, true);
    let once = params.clone();
    mlp_loss(&mut params, &x, &target, 1.0, true);
    for ((_, a), (_, b)) in once.iter().zip(params.iter()) {
        for (ga, gb) in a.grad.data().iter().zip(b.grad.data()) {
            assert!((2.0 * ga - gb).abs() <= 1e-12 * gb.abs().max(1.0));
        }
    }
    zero_grad(&mut params);
    assert!(params.iter().all(|(_, p)| p.grad.data().iter().all(|&g| g == 0.0)));
}

#[test]
fn gradients_are_deterministic() {
    let Mlp { mut params, x, target } = random_mlp(5);
    let mut again = params.clone();
    mlp_loss(&mut params, &x, &target, 1.0, true);
    mlp_loss(&mut again, &x, &target, 1.0, true);
    for ((_, a), (_, b)) in params.iter().zip(again.iter()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.grad), bits(&b.grad));
    }
}

#[test]
fn sgd_zero_rate_is_noop() {
    let Mlp { mut params, x, target } = random_mlp(6);
    mlp_loss(&mut params, &x, &target, 1.0, true);
    let before = params.clone();
    sgd_step(&mut params, 0.0);
    assert_eq!(before, params);
}

#[test]
fn sgd_scalar_arithmetic() {
    let mut params = ParameterSet::new();
    params.insert("p", Tensor::scalar(1.0)).unwrap();
    params.get_mut("p").unwrap().grad = Tensor::scalar(2.0);
    sgd_step(&mut params, 0.5);
    assert_eq!(params.get("p").unwrap().value.item(), 0.0);
    // gradients are left for the caller to clear
    assert_eq!(params.get("p").unwrap().grad.item(), 2.0);
}

fn bowl_grad(params: &mut ParameterSet) {
    let mut tape = Tape::new();
    let p = tape.param(params, "p").unwrap();
    let three = tape.constant(Tensor::scalar(3.0));
    let l = tape.mse(p, three).unwrap();
    tape.backward(l, params).unwrap();
}

#[test]
fn sgd_converges_on_quadratic_bowl() {
    let mut params = ParameterSet::new();
    params.insert("p", Tensor::scalar(0.0)).unwrap();
    for _ in 0..200 {
        bowl_grad(&mut params);
        sgd_step(&mut params, 0.1);
        zero_grad(&mut params);
    }
    // error shrinks by 0.8 per step: 3·0.8²⁰⁰ ≈ 1e-19
    assert!((params.get("p").unwrap().value.item() - 3.0).abs() < 1e-6);
}

#[test]
fn adam_converges_on_quadratic_bowl() {
    let mut params = ParameterSet::new();
    params.insert("p", Tensor::scalar(0.0)).unwrap();
    let mut opt = Adam::new(0.05);
    for _ in 0..2000 {
        bowl_grad(&mut params);
        opt.step(&mut params);
        zero_grad(&mut params);
    }
    assert!((params.get("p").unwrap().value.item() - 3.0).abs() < 1e-3);
}

#[test]
fn glorot_bounds() {
    let mut r = rng::stream(9, 0);
    let w = glorot_uniform(32, 96, &mut r);
    let limit = (6.0f64 / 128.0).sqrt();
    assert!(w.data().iter().all(|v| v.abs() <= limit));
    assert!(w.data().iter().any(|v| v.abs() > 0.9 * limit));
}

#[test]
fn duplicate_parameter_names_rejected() {
    let mut params = ParameterSet::new();
    params.insert("a", Tensor::scalar(1.0)).unwrap();
    assert!(params.insert("a", Tensor::scalar(2.0)).is_err());
}

fn composite_loss(
    table: &Tensor,
    offsets: &Tensor,
    w_off: &Tensor,
    dir: &Tensor,
    idx: &Rc<Vec<usize>>,
    seg: &Rc<Segments>,
) -> (f64, [Tensor; 3]) {
    let mut tape = Tape::new();
    let tv = tape.variable(table.clone());
    let ov = tape.variable(offsets.clone());
    let wv = tape.variable(w_off.clone());
    let w = tape.cosine_weight(ov, 1.5).unwrap();
    let agg = tape.neighbor_aggregate(tv, ov, wv, w, idx.clone(), seg.clone()).unwrap();
    let ones = tape.constant(Tensor::filled(offsets.rows(), 1, 1.0));
    let s = tape.sum_weighted(w, ones, seg.clone()).unwrap();
    let b = tape.constant(t(1, 4, &[0.3, -0.2, 0.1, 0.7]));
    let sb = tape.scaled_bias(s, b).unwrap();
    let out = tape.add(agg, sb).unwrap();
    let d = tape.constant(dir.clone());
    let diff = tape.sub(out, d).unwrap();
    let l = tape.mse(diff, d).unwrap();
    tape.backward(l, &mut ParameterSet::new()).unwrap();
    let g = |v| tape.grad(v).unwrap().clone();
    (tape.value(l).item(), [g(tv), g(ov), g(wv)])
}

#[test]
fn fused_aggregate_matches_finite_differences() {
    let mut r = rng::stream(11, 0);
    let table = random_tensor(5, 4, &mut r);
    let offsets = random_tensor(9, 3, &mut r);
    let w_off = random_tensor(4, 3, &mut r);
    let idx = Rc::new((0..9).map(|_| r.random_range(0..5)).collect::<Vec<_>>());
    let seg = Rc::new(Segments::from_lengths([3, 0, 4, 2]));
    let dir = random_tensor(4, 4, &mut r);
    let (_, grads) = composite_loss(&table, &offsets, &w_off, &dir, &idx, &seg);
    let inputs = [table, offsets, w_off];
    for (k, analytic) in grads.iter().enumerate() {
        for i in 0..inputs[k].len() {
            let h = 1e-6;
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= h;
            let lp = composite_loss(&plus[0], &plus[1], &plus[2], &dir, &idx, &seg).0;
            let lm = composite_loss(&minus[0], &minus[1], &minus[2], &dir, &idx, &seg).0;
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic.data()[i];
            assert!(
                (a - fd).abs() <= 1e-3 * a.abs().max(fd.abs()).max(1e-6),
                "input {k}[{i}]: analytic {a} fd {fd}"
            );
        }
    }
}

#[test]
fn gather_concat_and_max_match_finite_differences() {
    let mut r = rng::stream(12, 0);
    let x0 = random_tensor(4, 3, &mut r);
    let idx = Rc::new(vec![0, 2, 2, 3, 1, 0]);
    let f = |x: &Tensor| -> (f64, Tensor) {
        let mut tape = Tape::new();
        let xv = tape.variable(x.clone());
        let g = tape.gather(xv, idx.clone()).unwrap();
        let sq = tape.scale(g, -0.5);
        let c = tape.concat(&[g, sq]).unwrap();
        let m = tape.max_over_set(c, &Segments::uniform(2, 3)).unwrap();
        let z = tape.constant(Tensor::zeros(2, 6));
        let l = tape.mse(m, z).unwrap();
        tape.backward(l, &mut ParameterSet::new()).unwrap();
        (tape.value(l).item(), tape.grad(xv).unwrap().clone())
    };
    let (_, analytic) = f(&x0);
    for i in 0..x0.len() {
        let h = 1e-6;
        let mut p = x0.clone();
        p.data_mut()[i] += h;
        let mut m = x0.clone();
        m.data_mut()[i] -= h;
        let fd = (f(&p).0 - f(&m).0) / (2.0 * h);
        let a = analytic.data()[i];
        assert!((a - fd).abs() <= 1e-3 * a.abs().max(fd.abs()).max(1e-6), "{i}: {a} vs {fd}");
    }
}
