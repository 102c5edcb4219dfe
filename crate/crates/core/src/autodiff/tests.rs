use super::*;
use crate::error::Error;
use crate::gradcheck::{max_grad_discrepancy, rel_err};
use crate::rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn matmul_known_value() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
    let b = tape.constant(t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0])).unwrap();
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
}

#[test]
fn mlp_chain_matches_finite_differences() {
    let mut r = rng::from_seed(11);
    let inputs = vec![
        Tensor::uniform(vec![3, 4], -1.0, 1.0, &mut r),
        Tensor::uniform(vec![4, 5], -1.0, 1.0, &mut r),
        Tensor::uniform(vec![5], -0.5, 1.0, &mut r),
    ];
    let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| {
        let h = tape.matmul(ids[0], ids[1])?;
        let h = tape.add(h, ids[2])?;
        let h = tape.relu(h)?;
        tape.mean(h)
    })
    .unwrap();
    assert!(worst <= TOL, "worst rel err {worst}");
}

#[test]
fn softmax_rows_are_distributions_and_stable() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2, 3], &[1000.0, 0.0, -1000.0, 3.0, 1.0, 0.2])).unwrap();
    let p = tape.softmax(x).unwrap();
    let d = tape.value(p).data();
    assert!(d.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!((d[0..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((d[3..6].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((d[0] - 1.0).abs() < 1e-12, "saturated row should be one-hot");
}

#[test]
fn softmax_log_nll_gradients() {
    let mut r = rng::from_seed(3);
    let inputs = vec![Tensor::uniform(vec![4, 3], -2.0, 2.0, &mut r)];
    let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| {
        let p = tape.softmax(ids[0])?;
        tape.nll_loss(p, &[0, 2, 1, 1])
    })
    .unwrap();
    assert!(worst <= TOL, "worst rel err {worst}");
}

#[test]
fn log_clamps_small_arguments() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[0.0, 1.0]), true).unwrap();
    let l = tape.log(x).unwrap();
    assert!(tape.value(l).data()[0].is_finite());
    let s = tape.sum(l).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn elementwise_activations_match_finite_differences() {
    let mut r = rng::from_seed(5);
    let inputs = vec![Tensor::uniform(vec![6], -3.0, 3.0, &mut r)];
    for build in [0, 1, 2] {
        let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| {
            let y = match build {
                0 => tape.sigmoid(ids[0])?,
                1 => tape.softplus(ids[0])?,
                _ => {
                    let y = tape.mul(ids[0], ids[0])?;
                    tape.add_scalar(y, 0.5)?
                }
            };
            tape.sum(y)
        })
        .unwrap();
        assert!(worst <= TOL, "builder {build}: worst rel err {worst}");
    }
}

#[test]
fn conv2d_forward_hand_case() {
    let mut tape = Tape::new();
    // 1x1x3x3 input, 1x1x2x2 kernel of ones, bias 1.
    let x = tape.constant(t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.])).unwrap();
    let w = tape.constant(t(&[1, 1, 2, 2], &[1., 1., 1., 1.])).unwrap();
    let b = tape.constant(t(&[1], &[1.0])).unwrap();
    let y = tape.conv2d(x, w, b).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(tape.value(y).data(), &[13.0, 17.0, 25.0, 29.0]);
}

#[test]
fn conv_pool_chain_matches_finite_differences() {
    let mut r = rng::from_seed(7);
    let inputs = vec![
        Tensor::uniform(vec![2, 2, 6, 6], -1.0, 1.0, &mut r),
        Tensor::uniform(vec![3, 2, 3, 3], -0.5, 0.5, &mut r),
        Tensor::uniform(vec![3], -0.5, 0.5, &mut r),
    ];
    let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| {
        let y = tape.conv2d(ids[0], ids[1], ids[2])?;
        let y = tape.avg_pool2d(y, 2)?;
        let y = tape.relu(y)?;
        tape.mean(y)
    })
    .unwrap();
    assert!(worst <= TOL, "worst rel err {worst}");
}

#[test]
fn structural_ops_match_finite_differences() {
    let mut r = rng::from_seed(9);
    let inputs = vec![
        Tensor::uniform(vec![6], -1.0, 1.0, &mut r),
        Tensor::uniform(vec![1], 0.5, 2.0, &mut r),
    ];
    let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| {
        let head = tape.slice(ids[0], 0, 3)?;
        let tail = tape.slice(ids[0], 3, 3)?;
        let joined = tape.concat(&[tail, head])?;
        let scaled = tape.smul(ids[1], joined)?;
        let scaled = tape.div_scalar(scaled, ids[1])?;
        let scaled = tape.smul(ids[1], scaled)?;
        let g = tape.gather_scalar(scaled, 4)?;
        let s = tape.sum(scaled)?;
        let m = tape.reshape(scaled, vec![2, 3])?;
        let mt = tape.transpose(m)?;
        let mm = tape.mean(mt)?;
        let total = tape.add(s, g)?;
        tape.add(total, mm)
    })
    .unwrap();
    assert!(worst <= TOL, "worst rel err {worst}");
}

#[test]
fn mse_matches_finite_differences() {
    let mut r = rng::from_seed(13);
    let inputs = vec![
        Tensor::uniform(vec![3, 2], -1.0, 1.0, &mut r),
        Tensor::uniform(vec![3, 2], -1.0, 1.0, &mut r),
    ];
    let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| tape.mse_loss(ids[0], ids[1])).unwrap();
    assert!(worst <= TOL, "worst rel err {worst}");
}

#[test]
fn repeated_backward_accumulates() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
    let y = tape.mul(x, x).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[4.0, 8.0]);
}

#[test]
fn non_finite_values_are_hard_errors() {
    let mut tape = Tape::new();
    assert!(matches!(
        tape.leaf(t(&[1], &[f64::NAN]), true),
        Err(Error::NonFinite { .. })
    ));
    let big = tape.leaf(t(&[1], &[1e308]), true).unwrap();
    assert!(matches!(tape.scale(big, 100.0), Err(Error::NonFinite { .. })));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
    assert!(tape.backward(x).is_err());
}

#[test]
fn sgd_zero_grad_is_identity() {
    let mut ps = ParamSet::new();
    let id = ps.register("w", t(&[2], &[0.5, -0.5]));
    ps.note_zero_grad(id);
    let mut opt = Optimizer::sgd(0.1);
    opt.step(&mut ps).unwrap();
    assert_eq!(ps.value(id).data(), &[0.5, -0.5]);
}

#[test]
fn missing_gradient_is_reported_with_index() {
    let mut ps = ParamSet::new();
    let a = ps.register("a", t(&[1], &[1.0]));
    let _b = ps.register("b", t(&[1], &[2.0]));
    ps.note_zero_grad(a);
    let mut opt = Optimizer::sgd(0.1);
    match opt.step(&mut ps) {
        Err(Error::MissingGradient { index, name }) => {
            assert_eq!(index, 1);
            assert_eq!(name, "b");
        }
        other => panic!("expected missing-gradient error, got {other:?}"),
    }
}

#[test]
fn adam_first_step_hand_value() {
    // With g = 1: m-hat = 1, v-hat = 1, so the update is lr / (1 + eps).
    let mut ps = ParamSet::new();
    let id = ps.register("w", t(&[1], &[0.0]));
    ps.add_grad(id, &[1.0]).unwrap();
    let mut opt = Optimizer::adam(1e-3);
    opt.step(&mut ps).unwrap();
    let expect = -1e-3 / (1.0 + 1e-8);
    assert!(rel_err(ps.value(id).data()[0], expect) < 1e-12);
}

#[test]
fn adamw_decoupled_decay_acts_without_gradient_signal() {
    let mut ps = ParamSet::new();
    let id = ps.register("w", t(&[1], &[2.0]));
    ps.note_zero_grad(id);
    let mut opt = Optimizer::adamw(0.1, 0.5);
    opt.step(&mut ps).unwrap();
    // Pure decay: w - lr * wd * w = 2 - 0.1 * 0.5 * 2.
    assert!((ps.value(id).data()[0] - 1.9).abs() < 1e-12);
}

#[test]
fn binding_roundtrip_accumulates_into_paramset() {
    let mut ps = ParamSet::new();
    let w = ps.register("w", t(&[2], &[1.0, 3.0]));
    let mut tape = Tape::new();
    let bind = ps.bind(&mut tape).unwrap();
    let y = tape.mul(bind.id(w), bind.id(w)).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    ps.absorb_grads(&tape, &bind);
    let g = ps.param(w).grad.as_ref().unwrap();
    assert_eq!(g.data(), &[2.0, 6.0]);
}

#[test]
fn bias_broadcast_matches_finite_differences() {
    let mut r = rng::from_seed(17);
    let inputs = vec![
        Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut r),
        Tensor::uniform(vec![3], -1.0, 1.0, &mut r),
    ];
    let worst = max_grad_discrepancy(&inputs, H, &mut |tape, ids| {
        let y = tape.add(ids[0], ids[1])?;
        let y = tape.sigmoid(y)?;
        tape.mean(y)
    })
    .unwrap();
    assert!(worst <= TOL, "worst rel err {worst}");
}
