use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares tape gradients with central differences for every parameter
/// entry. `loss` builds the scalar loss on a fresh tape.
fn check_gradients<F>(store: &mut ParamStore, loss: F, tol: f64)
where
    F: Fn(&Tape, &ParamStore) -> Var,
{
    store.zero_grads();
    let tape = Tape::new();
    let l = loss(&tape, store);
    tape.backward(l, store).unwrap();
    let h = 1e-6;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let analytic = store.grad(id).to_vec();
        for i in 0..analytic.len() {
            let orig = store.values(id)[i];
            store.values_mut(id)[i] = orig + h;
            let t = Tape::new();
            let lp = t.scalar(loss(&t, store));
            store.values_mut(id)[i] = orig - h;
            let t = Tape::new();
            let lm = t.scalar(loss(&t, store));
            store.values_mut(id)[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
            assert!(err < tol, "{}[{i}]: {} vs {fd}", store.param(id).name, analytic[i]);
        }
    }
}

#[test]
fn linear_loss_gradient_has_input_rows() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::matrix(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap()).unwrap();
    let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
    let tape = Tape::new();
    let xv = tape.input(x.clone());
    let wv = tape.param(&store, w);
    let y = tape.matmul(xv, wv).unwrap();
    let loss = tape.sum(y);
    tape.backward(loss, &mut store).unwrap();
    // ∂/∂W[p, j] Σ_i Σ_j (xW)[i, j] = Σ_i x[i, p]
    let g = store.grad(w);
    for p in 0..3 {
        let col_sum = x.get(0, p) + x.get(1, p);
        assert_eq!(g[p * 2], col_sum);
        assert_eq!(g[p * 2 + 1], col_sum);
    }
}

#[test]
fn sigmoid_regression_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let mut store = ParamStore::new();
        store.add("w", random_matrix(&mut rng, 4, 3)).unwrap();
        let x = random_matrix(&mut rng, 5, 4);
        let t = random_matrix(&mut rng, 5, 3);
        let w = store.id("w").unwrap();
        check_gradients(
            &mut store,
            |tape, s| {
                let xv = tape.input(x.clone());
                let tv = tape.input(t.clone());
                let wv = tape.param(s, w);
                let y = tape.activation(tape.matmul(xv, wv).unwrap(), Activation::Sigmoid);
                let d = tape.sub(y, tv).unwrap();
                tape.sum(tape.square(d))
            },
            1e-4,
        );
    }
}

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let acts = [
        Activation::LeakyRelu(0.01),
        Activation::Elu,
        Activation::Sigmoid,
        Activation::Softplus,
        Activation::Tanh,
        Activation::Identity,
    ];
    for _ in 0..20 {
        let mut store = ParamStore::new();
        let a = store.add("a", random_matrix(&mut rng, 4, 3)).unwrap();
        let b = store.add("b", random_matrix(&mut rng, 4, 3)).unwrap();
        let row = store.add("row", random_matrix(&mut rng, 1, 3)).unwrap();
        let col = store.add("col", random_matrix(&mut rng, 4, 1)).unwrap();
        let w = store.add("w", random_matrix(&mut rng, 3, 2)).unwrap();
        check_gradients(
            &mut store,
            |t, s| {
                let (a, b, row, col, w) = (t.param(s, a), t.param(s, b), t.param(s, row), t.param(s, col), t.param(s, w));
                let mut terms = Vec::new();
                for act in acts {
                    terms.push(t.sum(t.activation(a, act)));
                }
                let pos = t.add_scalar(t.square(b), 0.5);
                let colpos = t.add_scalar(t.square(col), 0.5);
                terms.push(t.sum(t.mul(a, b).unwrap()));
                terms.push(t.sum(t.div(a, pos).unwrap()));
                terms.push(t.sum(t.sub(t.add(a, b).unwrap(), t.scale(b, 0.3)).unwrap()));
                terms.push(t.sum(t.mul_row(t.add_row(a, row).unwrap(), row).unwrap()));
                terms.push(t.mean(t.mul_col(a, col).unwrap()));
                terms.push(t.sum(t.div_col(a, colpos).unwrap()));
                terms.push(t.sum(t.log(pos)));
                terms.push(t.sum(t.sqrt(pos)));
                terms.push(t.sum(t.exp(t.scale(a, 0.5))));
                terms.push(t.sum(t.cos(a)));
                terms.push(t.sum(t.sin(t.neg(b))));
                terms.push(t.sum(t.square(t.sum_cols(t.slice_cols(a, 1, 3).unwrap()))));
                terms.push(t.sum(t.square(t.concat_cols(&[a, b, col]).unwrap())));
                terms.push(t.sum(t.tanh_matmul(a, w)));
                let mut total = terms[0];
                for &x in &terms[1..] {
                    total = t.add(total, x).unwrap();
                }
                total
            },
            1e-4,
        );
    }
}

trait TapeExt {
    fn tanh_matmul(&self, a: Var, w: Var) -> Var;
}

impl TapeExt for Tape {
    fn tanh_matmul(&self, a: Var, w: Var) -> Var {
        self.activation(self.matmul(a, w).unwrap(), Activation::Tanh)
    }
}

#[test]
fn row_jacobian_propagates_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let p = store.add("p", random_matrix(&mut rng, 3, 2)).unwrap();
    // Row map (u, v) ↦ (u·v, sin u, v²) recorded from outside the tape.
    let f = |t: &Tape, s: &ParamStore| {
        let x = t.param(s, p);
        let xs = t.value(x);
        let mut vals = Vec::new();
        let mut jac = Vec::new();
        for r in 0..3 {
            let (u, v) = (xs.get(r, 0), xs.get(r, 1));
            vals.extend([u * v, u.sin(), v * v]);
            jac.extend([v, u, u.cos(), 0.0, 0.0, 2.0 * v]);
        }
        let y = t.row_jacobian(x, Tensor::matrix(3, 3, vals).unwrap(), jac).unwrap();
        t.sum(t.square(y))
    };
    check_gradients(&mut store, f, 1e-5);
}

#[test]
fn disconnected_parameter_is_reported_in_strict_mode() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::filled(1, 2, 1.0)).unwrap();
    store.add("unused", Tensor::filled(1, 2, 1.0)).unwrap();
    let tape = Tape::new();
    let loss = tape.sum(tape.param(&store, a));
    assert_eq!(tape.backward_strict(loss, &mut store), Err(NnError::DisconnectedGraph("unused".into())));
    assert!(tape.backward(loss, &mut store).is_ok());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::filled(2, 2, 1.0)).unwrap();
    let tape = Tape::new();
    let v = tape.param(&store, a);
    assert_eq!(tape.backward(v, &mut store), Err(NnError::NotScalar(vec![2, 2])));
}

#[test]
fn backward_is_reproducible_after_zeroing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[4, 6, 2], Activation::LeakyRelu(0.01), Activation::Sigmoid, &mut rng).unwrap();
    let x = random_matrix(&mut rng, 3, 4);
    let run = |store: &mut ParamStore| {
        store.zero_grads();
        let tape = Tape::new();
        let xv = tape.input(x.clone());
        let y = mlp.forward(&tape, store, xv).unwrap();
        let loss = tape.sum(tape.square(y));
        tape.backward(loss, store).unwrap();
        store.iter().map(|p| p.tensor.grad.clone().unwrap()).collect::<Vec<_>>()
    };
    let g1 = run(&mut store);
    let g2 = run(&mut store);
    assert_eq!(g1, g2);
}

#[test]
fn shape_mismatch_is_reported() {
    let tape = Tape::new();
    let a = tape.input(Tensor::zeros(2, 3));
    let b = tape.input(Tensor::zeros(2, 3));
    assert!(matches!(tape.matmul(a, b), Err(NnError::ShapeMismatch { .. })));
    let c = tape.input(Tensor::zeros(3, 2));
    assert!(matches!(tape.add(a, c), Err(NnError::ShapeMismatch { .. })));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    assert!(matches!(mlp_forward(&Tensor::zeros(1, 3), &mlp, &store), Err(NnError::ShapeMismatch { .. })));
}

#[test]
fn duplicate_names_are_rejected() {
    let mut store = ParamStore::new();
    store.add("a", Tensor::zeros(1, 1)).unwrap();
    assert_eq!(store.add("a", Tensor::zeros(1, 1)), Err(NnError::DuplicateParameter("a".into())));
}

#[test]
fn identity_dense_layer_passes_input_through() {
    let mut store = ParamStore::new();
    let d = Dense::identity(&mut store, "id", 3).unwrap();
    let mlp = Mlp { layers: vec![(d, Activation::Identity)] };
    let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 7.0, -0.25]).unwrap();
    assert_eq!(mlp_forward(&x, &mlp, &store).unwrap().values, x.values);
}

#[test]
fn activation_examples() {
    assert_eq!(Activation::LeakyRelu(0.01).apply(-1.0), -0.01);
    assert_eq!(Activation::LeakyRelu(0.2).apply(-1.0), -0.2);
    for x in [-800.0, -30.0, -1.0, 0.0, 2.0, 40.0] {
        assert!(Activation::Softplus.apply(x) > 0.0 || x < -700.0);
        let s = Activation::Sigmoid.apply(x);
        assert!((0.0..=1.0).contains(&s));
    }
    assert!(Activation::Softplus.apply(-30.0) > 0.0);
}

fn quadratic_run(config: RAdamConfig, start: f64, target: f64, steps: usize) -> Vec<f64> {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(start)).unwrap();
    let mut opt = OptimizerState::new(&store, config);
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        store.zero_grads();
        let tape = Tape::new();
        let pv = tape.param(&store, p);
        let loss = tape.sum(tape.square(tape.add_scalar(pv, -target)));
        tape.backward(loss, &mut store).unwrap();
        opt.radam_step(&mut store);
        trace.push(store.values(p)[0]);
    }
    trace
}

#[test]
fn radam_converges_on_quadratic() {
    let trace = quadratic_run(RAdamConfig::default(), 0.5, 1.0, 5000);
    let last = *trace.last().unwrap();
    assert!((last - 1.0).abs() < 1e-4, "{last}");
}

#[test]
fn constant_gradient_moves_monotonically() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(0.0)).unwrap();
    let mut opt = OptimizerState::new(&store, RAdamConfig::default());
    let mut last = 0.0;
    for _ in 0..200 {
        store.zero_grads();
        store.accumulate_grad(p, &[2.5]);
        opt.radam_step(&mut store);
        let v = store.values(p)[0];
        assert!(v < last);
        last = v;
    }
}

#[test]
fn zero_gradient_leaves_parameters() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::matrix(1, 3, vec![0.3, -1.0, 2.0]).unwrap()).unwrap();
    let mut opt = OptimizerState::new(&store, RAdamConfig::default());
    for _ in 0..20 {
        store.zero_grads();
        opt.radam_step(&mut store);
    }
    assert_eq!(store.values(p), &[0.3, -1.0, 2.0]);
}

#[test]
fn frozen_parameters_do_not_move() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(1.0)).unwrap();
    store.set_trainable(p, false);
    let mut opt = OptimizerState::new(&store, RAdamConfig::default());
    store.accumulate_grad(p, &[1.0]);
    opt.radam_step(&mut store);
    assert_eq!(store.values(p), &[1.0]);
}

#[test]
fn unrectified_update_is_adam() {
    // Reference Adam written out independently.
    let cfg = RAdamConfig { rectify: false, learning_rate: 1e-2, ..RAdamConfig::default() };
    let trace = quadratic_run(cfg, 0.0, 1.0, 50);
    let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    for (t, &got) in trace.iter().enumerate() {
        let g = 2.0 * (x - 1.0);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
        let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
        x -= 1e-2 * mh / (vh.sqrt() + 1e-8);
        assert!((x - got).abs() < 1e-14, "step {t}: {x} vs {got}");
    }
}

#[test]
fn rectified_warmup_uses_momentum_only() {
    // For the first steps ρ_t ≤ 5 and the update is lr · m̂.
    let trace = quadratic_run(RAdamConfig::default(), 0.0, 1.0, 1);
    assert!((trace[0] - 5e-4 * 2.0).abs() < 1e-15);
}

#[test]
fn training_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[5, 8, 5], Activation::Elu, Activation::Sigmoid, &mut rng).unwrap();
        let mut opt = OptimizerState::new(&store, RAdamConfig::default());
        let x = random_matrix(&mut rng, 6, 5);
        let mut losses = Vec::new();
        for _ in 0..10 {
            store.zero_grads();
            let tape = Tape::new();
            let xv = tape.input(x.clone());
            let y = mlp.forward(&tape, &store, xv).unwrap();
            let loss = tape.mean(tape.square(tape.sub(y, xv).unwrap()));
            losses.push(tape.scalar(loss).to_bits());
            tape.backward(loss, &mut store).unwrap();
            opt.radam_step(&mut store);
        }
        losses
    };
    assert_eq!(run(), run());
}
