use approx::assert_abs_diff_eq;
use ncl_core::autodiff::*;
use ncl_core::compile::{to_soft_violation, TNorm};
use ncl_core::lang::{ground_program, parse_program, Instance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn param(store: &mut ParamStore, name: &str, shape: &[usize], data: Vec<f64>) -> ParamId {
    store.add(name, Tensor::new(shape.to_vec(), data).unwrap())
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0; 3]));
    let s = g.softmax(x, 0).unwrap();
    for &v in &g.value(s).data {
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
    }
}

#[test]
fn matmul_shape_rule() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
    let b = g.constant(Tensor::matrix(3, 1, vec![1.0; 3]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).shape, vec![2, 1]);
    assert_eq!(g.value(c).data, vec![3.0, 3.0]);
    assert!(matches!(g.matmul(b, b), Err(AdError::Shape(_))));
}

#[test]
fn relu_clips_negatives() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![-1.0, 2.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r).data, vec![0.0, 2.0]);
}

#[test]
fn square_has_derivative_six_at_three() {
    let mut store = ParamStore::new();
    let x = param(&mut store, "x", &[], vec![3.0]);
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let y = g.mul(xv, xv).unwrap();
    g.backward(y, &mut store).unwrap();
    assert_eq!(store.grad(x).data, vec![6.0]);
    // a second backward accumulates
    g.backward(y, &mut store).unwrap();
    assert_eq!(store.grad(x).data, vec![12.0]);
}

#[test]
fn log_softmax_gradient_is_onehot_minus_softmax() {
    let logits = vec![0.3, -1.2, 2.0, 0.5];
    let k = 2;
    let mut store = ParamStore::new();
    let x = param(&mut store, "x", &[4], logits.clone());
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let ls = g.log_softmax(xv, 0).unwrap();
    let pick = g.gather(ls, &[k]).unwrap();
    let l = g.sum(pick);
    g.backward(l, &mut store).unwrap();
    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
    let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
    for (i, &v) in logits.iter().enumerate() {
        let expected = (i == k) as u8 as f64 - (v - m).exp() / z;
        assert_abs_diff_eq!(store.grad(x).data[i], expected, epsilon = 1e-12);
    }
}

#[test]
fn disconnected_parameter_gets_zero_gradient() {
    let mut store = ParamStore::new();
    let a = param(&mut store, "a", &[2], vec![1.0, 2.0]);
    let b = param(&mut store, "b", &[2], vec![3.0, 4.0]);
    let mut g = Graph::new();
    let av = g.param(&store, a);
    let _bv = g.param(&store, b);
    let l = g.sum(av);
    g.backward(l, &mut store).unwrap();
    assert_eq!(store.grad(b).data, vec![0.0, 0.0]);
    assert_eq!(store.grad(a).data, vec![1.0, 1.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut store = ParamStore::new();
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(g.backward(x, &mut store), Err(AdError::NonScalarLoss(_))));
}

#[test]
fn softmax_over_empty_axis_is_rejected() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 0]));
    assert!(matches!(g.softmax(x, 1), Err(AdError::EmptyAxis(1))));
}

#[test]
fn quadratic_form_checks_to_roundoff() {
    let mut store = ParamStore::new();
    let a = Tensor::matrix(3, 3, vec![2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 3.0]).unwrap();
    let x = param(&mut store, "x", &[3, 1], vec![0.4, -1.1, 0.7]);
    let err = grad_check(&mut store, 1e-5, |g, s| {
        let xv = g.param(s, x);
        let av = g.constant(a.clone());
        let ax = g.matmul(av, xv)?;
        let q = g.mul(xv, ax)?;
        Ok(g.sum(q))
    })
    .unwrap();
    assert!(err <= 1e-8, "{err}");
}


#[test]
fn concat_routes_gradient_to_each_part() {
    let mut store = ParamStore::new();
    let a = param(&mut store, "a", &[2, 2], vec![0.3, -0.2, 1.1, 0.5]);
    let b = param(&mut store, "b", &[3], vec![-0.7, 0.4, 0.9]);
    let w = Tensor::vector(vec![1.0, -2.0, 0.5, 3.0, 0.25, -1.0, 2.0]);
    let err = grad_check(&mut store, 1e-5, |g, s| {
        let av = g.param(s, a);
        let bv = g.param(s, b);
        let c = g.concat(&[av, bv]);
        let sm = g.softmax(c, 0)?;
        let wv = g.constant(w.clone());
        let p = g.mul(sm, wv)?;
        Ok(g.sum(p))
    })
    .unwrap();
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn mlp_cross_entropy_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let mlp = build_mlp(&mut store, "m", &[5, 7, 3], Activation::Tanh, &mut rng).unwrap();
    let x: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::matrix(4, 5, x).unwrap();
    let err = grad_check(&mut store, 1e-5, |g, s| {
        let xv = g.constant(x.clone());
        let logits = mlp.forward(g, s, xv)?;
        cross_entropy(g, logits, &[0, 2, 1, 2])
    })
    .unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn relu_mlp_cross_entropy_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let mlp = build_mlp(&mut store, "m", &[6, 8, 4], Activation::Relu, &mut rng).unwrap();
    let x = Tensor::matrix(3, 6, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let err = grad_check(&mut store, 1e-6, |g, s| {
        let xv = g.constant(x.clone());
        let logits = mlp.forward(g, s, xv)?;
        cross_entropy(g, logits, &[3, 0, 1])
    })
    .unwrap();
    assert!(err <= 1e-4, "{err}");
}

const SUDOKU9: &str = "domain R = 0..8; domain C = 0..8; domain V = 1..9; domain B = 0..8; domain I = 0..8;
pred cell(R, C, V) categorical;
constraint row: forall r in R, v in V: exactly(1){cell(r, c, v) for c in C};
constraint col: forall c in C, v in V: exactly(1){cell(r, c, v) for r in R};
constraint block: forall b in B, v in V: exactly(1){cell(3 * (b / 3) + i / 3, 3 * (b % 3) + i % 3, v) for i in I};
";

#[test]
fn sudoku_product_violation_checks() {
    let p = parse_program(SUDOKU9).unwrap();
    let gp = ground_program(&p, &Instance::default()).unwrap();
    let soft = to_soft_violation(&gp, TNorm::Product).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let logits = param(
        &mut store,
        "logits",
        &[81 * 9],
        (0..729).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let segments: Vec<(usize, usize)> = (0..81).map(|v| (v * 9, 9)).collect();
    let weights = vec![1.0; soft.roots.len()];
    let err = grad_check(&mut store, 1e-5, |g, s| {
        let z = g.param(s, logits);
        let probs = g.segment_softmax(z, &segments)?;
        let flat = &g.value(probs).data;
        let table: Vec<Vec<f64>> = flat.chunks(9).map(|c| c.to_vec()).collect();
        let (viol, grad) = soft.violation_grad(&table, &weights);
        g.external(probs, viol.iter().sum(), grad.concat())
    })
    .unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn mlp_parameter_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let mlp = build_mlp(&mut store, "m", &[784, 128, 10], Activation::Relu, &mut rng).unwrap();
    assert_eq!(mlp.n_params(), 101_770);
    assert_eq!(store.count(), 101_770);
}

#[test]
fn single_layer_is_linear_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let mlp = build_mlp(&mut store, "m", &[4, 3], Activation::Relu, &mut rng).unwrap();
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[5, 4]));
    let y = mlp.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.value(y).shape, vec![5, 3]);
    assert!(matches!(
        build_mlp(&mut store, "z", &[4, 0, 2], Activation::Relu, &mut rng),
        Err(AdError::ZeroWidth(1))
    ));
}

#[test]
fn initialization_is_seeded_and_bounded() {
    let make = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        build_mlp(&mut store, "m", &[16, 8, 2], Activation::Relu, &mut rng).unwrap();
        store
    };
    assert_eq!(make(9), make(9));
    assert_ne!(make(9), make(10));
    let s = make(9);
    let w = s.value(s.find("m.0.weight").unwrap());
    assert!(w.data.iter().all(|v| v.abs() <= 0.25));
}

#[test]
fn checkpoint_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    build_mlp(&mut store, "m", &[3, 4, 2], Activation::Relu, &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nckp");
    save_checkpoint(&store, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"NCKP");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let mut other = ParamStore::new();
    build_mlp(&mut other, "m", &[3, 4, 2], Activation::Relu, &mut rng).unwrap();
    assert_ne!(other, store);
    load_checkpoint(&mut other, &path).unwrap();
    assert_eq!(other, store);
    assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    assert!(read_checkpoint(&b"NCKQ\x01\0\0\0"[..]).is_err());
}

#[test]
fn adam_and_sgd_descend_a_quadratic() {
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let mut store = ParamStore::new();
        let x = param(&mut store, "x", &[2], vec![3.0, -2.0]);
        let mut opt = make_optimizer(kind, 0.1);
        for _ in 0..300 {
            store.zero_grad();
            let mut g = Graph::new();
            let xv = g.param(&store, x);
            let sq = g.mul(xv, xv).unwrap();
            let l = g.sum(sq);
            g.backward(l, &mut store).unwrap();
            opt.step(&mut store);
        }
        assert!(store.value(x).data.iter().all(|v| v.abs() < 1e-2), "{kind:?}");
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(xs in proptest::collection::vec(-700.0f64..700.0, 1..12)) {
        let mut g = Graph::new();
        let n = xs.len();
        let x = g.constant(Tensor::matrix(1, n, xs).unwrap());
        let s = g.softmax(x, 1).unwrap();
        let total: f64 = g.value(s).data.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let ls = g.log_softmax(x, 1).unwrap();
        prop_assert!(g.value(ls).data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn elementwise_ops_check(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = param(&mut store, "a", &[2, 3], (0..6).map(|_| rng.random_range(0.2..2.0)).collect());
        let b = param(&mut store, "b", &[2, 3], (0..6).map(|_| rng.random_range(0.2..2.0)).collect());
        let axis = rng.random_range(0..2);
        let err = grad_check(&mut store, 1e-6, |g, s| {
            let av = g.param(s, a);
            let bv = g.param(s, b);
            let m = g.min(av, bv)?;
            let mx = g.max(av, bv)?;
            let l = g.log(mx);
            let sm = g.softmax(m, axis)?;
            let e = g.exp(sm);
            let c = g.clamp(l, -10.0, 10.0);
            let d = g.sub(c, e)?;
            let p = g.mul(d, sm)?;
            let r = g.sum_axis(p, axis)?;
            let t = g.tanh(r);
            let q = g.affine(t, 2.0, 1.0);
            Ok(g.sum(q))
        }).unwrap();
        prop_assert!(err <= 1e-4, "{}", err);
    }
}
