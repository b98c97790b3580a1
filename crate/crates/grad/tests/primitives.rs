use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbc_grad::suite::{check_primitive, params_for, uniform, Case, Prim, PRIMITIVES};
use rbc_grad::{
    Adam, AdamConfig, GradError, Graph, GraphLoss, Mask, ParamStore, Scalar, Tensor,
};

fn run_suite<S: Scalar>(tol: f64) {
    for &prim in PRIMITIVES {
        for seed in 0..10u64 {
            let report = check_primitive::<S>(prim, seed).unwrap();
            assert!(
                report.max_rel_error <= tol,
                "{prim:?} seed {seed} ({}): rel err {:.3e} at {}[{}] analytic {} numeric {}",
                S::NAME,
                report.max_rel_error,
                report.worst_param,
                report.worst_index,
                report.analytic,
                report.numeric
            );
        }
    }
}

#[test]
fn every_primitive_passes_gradcheck_f64() {
    run_suite::<f64>(1e-4);
}

#[test]
fn every_primitive_passes_gradcheck_f32() {
    run_suite::<f32>(1e-3);
}

#[test]
fn matmul_identity() {
    let mut g = Graph::<f32>::detached();
    let x = g
        .constant_from(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        .unwrap();
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 4] = 1.0;
    }
    let i = g.constant_from(vec![3, 3], eye).unwrap();
    let y = g.matmul(x, i).unwrap();
    assert_eq!(g.data(y), g.data(x));
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut g = Graph::<f32>::detached();
    let x = g.constant_from(vec![1, 4], vec![0.3; 4]).unwrap();
    let y = g.softmax(x).unwrap();
    assert_eq!(g.data(y), &[0.25; 4]);
}

#[test]
fn layer_norm_standardises_rows() {
    let mut g = Graph::<f64>::detached();
    let x = g
        .constant_from(vec![2, 5], vec![1.0, 2.0, 3.0, 4.0, 10.0, -3.0, 0.0, 0.5, 7.0, 2.0])
        .unwrap();
    let y = g.layer_norm(x, 1e-5).unwrap();
    for row in g.data(y).chunks(5) {
        let mean: f64 = row.iter().sum::<f64>() / 5.0;
        let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}

#[test]
fn sum_loss_gives_unit_gradient() {
    let mut p = ParamStore::new();
    let id = p.add("x", Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap()).unwrap();
    let mut g = Graph::new(&p);
    let x = g.param(id).unwrap();
    let loss = g.sum(x);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(id), &[1.0; 4]);
}

#[test]
fn zero_scaled_loss_gives_zero_gradient_and_unused_params_are_zero() {
    let mut p = ParamStore::new();
    let id = p.add("x", Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap()).unwrap();
    let unused = p.add("unused", Tensor::new(vec![2], vec![4.0, 5.0]).unwrap()).unwrap();
    let mut g = Graph::new(&p);
    let x = g.param(id).unwrap();
    let e = g.exp(x);
    let s = g.sum(e);
    let loss = g.scale(s, 0.0);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.param(id), &[0.0; 3]);
    assert_eq!(grads.param(unused), &[0.0; 2]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::<f32>::detached();
    let x = g.input(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    assert!(matches!(g.backward(x), Err(GradError::NonScalarLoss(_))));
}

#[test]
fn shape_mismatch_names_the_op() {
    let mut g = Graph::<f32>::detached();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    assert!(err.to_string().starts_with("matmul"), "{err}");
    let c = g.constant(Tensor::zeros(vec![4]));
    let err = g.add(a, c).unwrap_err();
    assert!(err.to_string().starts_with("add"), "{err}");
}

#[test]
fn masked_positions_get_exactly_zero_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = Graph::<f32>::detached();
    let q = g.constant(uniform(&mut rng, &[2, 4], -3.0, 3.0));
    let k = g.constant(uniform(&mut rng, &[3, 4], -3.0, 3.0));
    // value rows are one-hot, so outputs equal the attention weights
    let v = g
        .constant_from(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        .unwrap();
    let mask: Mask = Arc::from(vec![true, false, true, false, true, false]);
    let o = g.attention(q, k, v, 1, Some(&mask)).unwrap();
    let w = g.data(o);
    assert_eq!(w[1], 0.0);
    assert_eq!(w[3], 0.0);
    assert_eq!(w[5], 0.0);
    assert_eq!(w[4], 1.0);
    assert!((w[0] + w[2] - 1.0).abs() < 1e-6);
}

#[test]
fn forward_is_bitwise_deterministic() {
    let p = params_for(Prim::SelfAttention, 4);
    let case = Case {
        prim: Prim::SelfAttention,
        weights_seed: 9,
    };
    let run = || {
        let mut g = Graph::new(&p);
        let l = case.build(&mut g).unwrap();
        g.value(l).item().to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut p = ParamStore::new();
    let id = p.add("w", Tensor::new(vec![2], vec![0.3, -0.7]).unwrap()).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &p);
    let grads = rbc_grad::Gradients::zeros_like(&p);
    adam.step(&mut p, &grads).unwrap();
    assert_eq!(p.get(id).data(), &[0.3, -0.7]);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    // m = 0.1, v = 0.001; bias-corrected mhat = 1, vhat = 1 -> step = lr / (1 + eps)
    let mut p = ParamStore::new();
    let id = p.add("w", Tensor::new(vec![1], vec![1.0]).unwrap()).unwrap();
    let cfg = AdamConfig::with_lr(1e-2);
    let mut adam = Adam::new(cfg, &p);
    let mut grads = rbc_grad::Gradients::zeros_like(&p);
    grads.param_mut(id)[0] = 1.0;
    adam.step(&mut p, &grads).unwrap();
    let expected = 1.0 - 1e-2 / (1.0 + 1e-8);
    assert!((p.get(id).data()[0] - expected).abs() < 1e-6);
}

#[test]
fn adam_default_learning_rate() {
    assert_eq!(AdamConfig::default().lr, 1e-5);
}

#[test]
fn adam_rejects_nan_and_names_parameter() {
    let mut p = ParamStore::new();
    p.add("ok", Tensor::new(vec![1], vec![1.0]).unwrap()).unwrap();
    let bad = p.add("policy/bad", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &p);
    let mut grads = rbc_grad::Gradients::zeros_like(&p);
    grads.param_mut(bad)[1] = f32::NAN;
    let err = adam.step(&mut p, &grads).unwrap_err();
    assert_eq!(err, GradError::NonFiniteGradient("policy/bad".into()));
    assert_eq!(p.get(bad).data(), &[1.0, 2.0]);
}
