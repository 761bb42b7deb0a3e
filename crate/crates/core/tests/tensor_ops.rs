//! Contract tests for the autodiff ops, with independent oracles for
//! every derived expectation.

use dancegen_core::error::Error;
use dancegen_core::rng::Rng;
use dancegen_core::tensor::{grad_check, grad_check_in, DiffTensor, Tape};

fn t1(data: &[f64]) -> DiffTensor {
    DiffTensor::from_vec(vec![data.len()], data.to_vec()).unwrap()
}

fn t2(rows: usize, cols: usize, data: &[f64]) -> DiffTensor {
    DiffTensor::from_vec(vec![rows, cols], data.to_vec()).unwrap()
}

/// Direct convolution oracle: plain nested summation, independent of the
/// tape implementation.
#[allow(clippy::too_many_arguments)]
fn conv1d_oracle(
    x: &[f64],
    c_in: usize,
    t: usize,
    w: &[f64],
    c_out: usize,
    k: usize,
    b: &[f64],
    stride: usize,
    padding: usize,
) -> Vec<f64> {
    let t_out = (t + 2 * padding - k) / stride + 1;
    let mut out = vec![0.0; c_out * t_out];
    for co in 0..c_out {
        for ot in 0..t_out {
            let mut acc = b[co];
            for ci in 0..c_in {
                for kk in 0..k {
                    let pos = ot * stride + kk;
                    if pos >= padding && pos - padding < t {
                        acc += w[(co * c_in + ci) * k + kk] * x[ci * t + pos - padding];
                    }
                }
            }
            out[co * t_out + ot] = acc;
        }
    }
    out
}

#[test]
fn conv1d_identity_kernel() {
    let mut tape = Tape::new();
    let x = tape.leaf(t2(1, 3, &[1.0, 2.0, 3.0]), false).unwrap();
    let w = tape
        .leaf(DiffTensor::from_vec(vec![1, 1, 1], vec![1.0]).unwrap(), false)
        .unwrap();
    let b = tape.leaf(t1(&[0.0]), false).unwrap();
    let y = tape.conv1d(x, w, b, 1, 0).unwrap();
    assert_eq!(tape.data(y), &[1.0, 2.0, 3.0]);
}

#[test]
fn conv1d_stride_two_hand_case() {
    // Expected values computed by the direct-summation oracle.
    let x = [1.0, 1.0, 1.0, 1.0];
    let w = [1.0, 1.0];
    let b = [0.0];
    let expected = conv1d_oracle(&x, 1, 4, &w, 1, 2, &b, 2, 0);
    assert_eq!(expected, vec![2.0, 2.0]);

    let mut tape = Tape::new();
    let xv = tape.leaf(t2(1, 4, &x), false).unwrap();
    let wv = tape
        .leaf(DiffTensor::from_vec(vec![1, 1, 2], w.to_vec()).unwrap(), false)
        .unwrap();
    let bv = tape.leaf(t1(&b), false).unwrap();
    let y = tape.conv1d(xv, wv, bv, 2, 0).unwrap();
    assert_eq!(tape.data(y), expected.as_slice());
}

#[test]
fn conv1d_random_matches_oracle() {
    let mut rng = Rng::new(99);
    for case in 0..20 {
        let (c_in, t, c_out, k, stride, padding) = match case % 4 {
            0 => (3, 8, 2, 3, 1, 1),
            1 => (2, 10, 4, 4, 2, 1),
            2 => (1, 5, 1, 5, 1, 0),
            _ => (4, 12, 3, 2, 3, 0),
        };
        let x: Vec<f64> = rng.uniform_vec(c_in * t, -2.0, 2.0);
        let w: Vec<f64> = rng.uniform_vec(c_out * c_in * k, -1.0, 1.0);
        let b: Vec<f64> = rng.uniform_vec(c_out, -0.5, 0.5);
        let expected = conv1d_oracle(&x, c_in, t, &w, c_out, k, &b, stride, padding);

        let mut tape = Tape::new();
        let xv = tape.leaf(t2(c_in, t, &x), false).unwrap();
        let wv = tape
            .leaf(DiffTensor::from_vec(vec![c_out, c_in, k], w).unwrap(), false)
            .unwrap();
        let bv = tape.leaf(t1(&b), false).unwrap();
        let y = tape.conv1d(xv, wv, bv, stride, padding).unwrap();
        for (got, want) in tape.data(y).iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}

#[test]
fn conv1d_kernel_gradient_matches_finite_differences() {
    let mut rng = Rng::new(5);
    let x = t2(3, 8, &rng.uniform_vec(24, -1.0, 1.0));
    let kernel = DiffTensor::from_vec(vec![2, 3, 3], rng.uniform_vec(18, -1.0, 1.0)).unwrap();
    let bias = t1(&[0.1, -0.2]);
    let err = grad_check(
        move |tape, k| {
            let xv = tape.constant(x.clone())?;
            let bv = tape.constant(bias.clone())?;
            let y = tape.conv1d(xv, k, bv, 1, 1)?;
            tape.sum(y)
        },
        &kernel,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn conv1d_channel_mismatch_names_axes() {
    let mut tape = Tape::new();
    let x = tape.leaf(t2(3, 8, &[0.0; 24]), false).unwrap();
    let w = tape
        .leaf(DiffTensor::zeros(vec![2, 4, 3]), false)
        .unwrap();
    let b = tape.leaf(t1(&[0.0, 0.0]), false).unwrap();
    let err = tape.conv1d(x, w, b, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("input channels 3") && msg.contains("kernel input channels 4"), "{msg}");
}

#[test]
fn leaky_relu_definition() {
    let mut tape = Tape::new();
    let x = tape.leaf(t1(&[-1.0, 0.0, 2.0]), false).unwrap();
    let y = tape.leaky_relu(x, 0.2).unwrap();
    assert_eq!(tape.data(y), &[-0.2, 0.0, 2.0]);
}

#[test]
fn dropout_zero_rate_is_identity_in_train_mode() {
    let mut tape = Tape::training(42);
    let x = tape.leaf(t1(&[1.0, -2.0, 3.0]), false).unwrap();
    let y = tape.dropout(x, 0.0, 7).unwrap();
    assert_eq!(tape.data(y), &[1.0, -2.0, 3.0]);
}

#[test]
fn dropout_eval_mode_is_identity() {
    let mut tape = Tape::new();
    let x = tape.leaf(t1(&[1.0, -2.0, 3.0]), false).unwrap();
    let y = tape.dropout(x, 0.5, 7).unwrap();
    assert_eq!(tape.data(y), &[1.0, -2.0, 3.0]);
}

#[test]
fn dropout_train_mode_zeroes_and_rescales() {
    let n = 4000;
    let rate = 0.3;
    let mut tape = Tape::training(11);
    let x = tape
        .leaf(DiffTensor::from_vec(vec![n], vec![1.0; n]).unwrap(), false)
        .unwrap();
    let y = tape.dropout(x, rate, 123).unwrap();
    let data = tape.data(y);
    let scale = 1.0 / (1.0 - rate);
    let mut kept = 0usize;
    for &v in data {
        assert!(v == 0.0 || (v - scale).abs() < 1e-12);
        if v != 0.0 {
            kept += 1;
        }
    }
    let frac = kept as f64 / n as f64;
    assert!((frac - (1.0 - rate)).abs() < 0.03, "kept {frac}");
}

#[test]
fn dropout_bad_rate_is_config_error() {
    let mut tape = Tape::training(1);
    let x = tape.leaf(t1(&[1.0]), false).unwrap();
    assert!(matches!(tape.dropout(x, 1.0, 0), Err(Error::Config(_))));
    assert!(matches!(tape.dropout(x, -0.1, 0), Err(Error::Config(_))));
}

#[test]
fn linear_identity_and_hand_case() {
    let mut tape = Tape::new();
    let x = tape.leaf(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]), false).unwrap();
    let eye = tape.leaf(t2(2, 2, &[1.0, 0.0, 0.0, 1.0]), false).unwrap();
    let zero = tape.leaf(t1(&[0.0, 0.0]), false).unwrap();
    let y = tape.linear(x, eye, zero).unwrap();
    assert_eq!(tape.data(y), &[1.0, 2.0, 3.0, 4.0]);

    // [[1,2]] · [[1],[1]] + [0] = [[3]]
    let a = tape.leaf(t2(1, 2, &[1.0, 2.0]), false).unwrap();
    let w = tape.leaf(t2(2, 1, &[1.0, 1.0]), false).unwrap();
    let b = tape.leaf(t1(&[0.0]), false).unwrap();
    let out = tape.linear(a, w, b).unwrap();
    assert_eq!(tape.data(out), &[3.0]);
}

#[test]
fn linear_gradient_matches_finite_differences() {
    let mut rng = Rng::new(17);
    let x = t2(3, 4, &rng.uniform_vec(12, -1.0, 1.0));
    let w = t2(4, 2, &rng.uniform_vec(8, -1.0, 1.0));
    let b = t1(&rng.uniform_vec(2, -1.0, 1.0));
    let (wc, bc) = (w.clone(), b.clone());
    let err = grad_check(
        move |tape, v| {
            let wv = tape.constant(wc.clone())?;
            let bv = tape.constant(bc.clone())?;
            let y = tape.linear(v, wv, bv)?;
            let sq = tape.mul(y, y)?;
            tape.sum(sq)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn stop_gradient_forward_identity() {
    let mut tape = Tape::new();
    let x = tape.leaf(t1(&[1.0, 2.0]), true).unwrap();
    let y = tape.stop_gradient(x).unwrap();
    assert_eq!(tape.data(y), &[1.0, 2.0]);
}

#[test]
fn stop_gradient_kills_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(t1(&[1.0, 2.0]), true).unwrap();
    let y = tape.stop_gradient(x).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.grad(x).is_none() || tape.grad(x).unwrap().iter().all(|&g| g == 0.0));
}

#[test]
fn stop_gradient_product_rule_with_frozen_factor() {
    // d/dx sum(x · sg(x)) at x = [3] is [3], not [6].
    let mut tape = Tape::new();
    let x = tape.leaf(t1(&[3.0]), true).unwrap();
    let frozen = tape.stop_gradient(x).unwrap();
    let prod = tape.mul(x, frozen).unwrap();
    let s = tape.sum(prod).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[3.0]);
}

#[test]
fn softmax_cross_entropy_uniform_logits() {
    let mut tape = Tape::new();
    let logits = tape.leaf(t2(2, 4, &[0.5; 8]), false).unwrap();
    let loss = tape.softmax_cross_entropy(logits, &[1, 3]).unwrap();
    let v = tape.scalar_value(loss).unwrap();
    assert!((v - 4.0f64.ln()).abs() < 1e-12, "{v}");
}

#[test]
fn softmax_cross_entropy_saturated_target() {
    let mut tape = Tape::new();
    let mut row = vec![0.0; 5];
    row[2] = 1.0e6;
    let logits = tape.leaf(t2(1, 5, &row), false).unwrap();
    let loss = tape.softmax_cross_entropy(logits, &[2]).unwrap();
    assert!(tape.scalar_value(loss).unwrap() < 1e-9);
}

#[test]
fn softmax_cross_entropy_matches_direct_formula() {
    // Direct-formula oracle: -log(exp(l_y) / sum exp(l_j)), mean over rows.
    let mut rng = Rng::new(23);
    let data = rng.uniform_vec(15, -2.0, 2.0);
    let targets = [4usize, 0, 2];
    let mut expected = 0.0;
    for (row, &y) in targets.iter().enumerate() {
        let l = &data[row * 5..(row + 1) * 5];
        let denom: f64 = l.iter().map(|v| v.exp()).sum();
        expected -= (l[y].exp() / denom).ln();
    }
    expected /= 3.0;

    let mut tape = Tape::new();
    let logits = tape.leaf(t2(3, 5, &data), false).unwrap();
    let loss = tape.softmax_cross_entropy(logits, &targets).unwrap();
    assert!((tape.scalar_value(loss).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn softmax_cross_entropy_target_out_of_range() {
    let mut tape = Tape::new();
    let logits = tape.leaf(t2(1, 3, &[0.0, 0.0, 0.0]), false).unwrap();
    assert!(matches!(
        tape.softmax_cross_entropy(logits, &[3]),
        Err(Error::Index(_))
    ));
}

#[test]
fn grad_check_sum_of_squares() {
    let x = t1(&[1.0, 2.0, 3.0]);
    let err = grad_check(
        |tape, v| {
            let sq = tape.mul(v, v)?;
            tape.sum(sq)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn grad_check_constant_function_has_zero_gradient() {
    let x = t1(&[1.0, -1.0]);
    let mut tape = Tape::new();
    let v = tape.leaf(x, true).unwrap();
    let c = tape.constant(DiffTensor::scalar(5.0)).unwrap();
    let doubled = tape.scale(c, 2.0).unwrap();
    tape.backward(doubled).unwrap();
    // v never participates: its gradient stays exactly absent/zero.
    assert!(tape.grad(v).is_none());
}

#[test]
fn grad_check_rejects_bad_eps() {
    let x = t1(&[1.0]);
    assert!(grad_check(|tape, v| tape.sum(v), &x, 0.0).is_err());
}

#[test]
fn diamond_graph_accumulates_both_paths() {
    // y = 2x + 3x: dy/dx = 5 through two additive paths.
    let mut tape = Tape::new();
    let x = tape.leaf(t1(&[4.0, -1.0]), true).unwrap();
    let a = tape.scale(x, 2.0).unwrap();
    let b = tape.scale(x, 3.0).unwrap();
    let sum = tape.add(a, b).unwrap();
    let s = tape.sum(sum).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[5.0, 5.0]);
}

#[test]
fn replaying_the_same_tape_is_bit_identical() {
    let build = || {
        let mut rng = Rng::new(31);
        let mut tape = Tape::training(9);
        let x = tape
            .leaf(t2(4, 6, &rng.uniform_vec(24, -1.0, 1.0)), true)
            .unwrap();
        let w = tape
            .leaf(t2(6, 3, &rng.uniform_vec(18, -1.0, 1.0)), true)
            .unwrap();
        let b = tape.leaf(t1(&rng.uniform_vec(3, -1.0, 1.0)), true).unwrap();
        let h = tape.linear(x, w, b).unwrap();
        let h = tape.leaky_relu(h, 0.2).unwrap();
        let h = tape.dropout(h, 0.3, 77).unwrap();
        let sq = tape.mul(h, h).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        (
            tape.grad(x).unwrap().to_vec(),
            tape.grad(w).unwrap().to_vec(),
            tape.grad(b).unwrap().to_vec(),
        )
    };
    let first = build();
    let second = build();
    for (a, b) in [(&first.0, &second.0), (&first.1, &second.1), (&first.2, &second.2)] {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn dropout_gradient_matches_finite_differences_in_train_mode() {
    let mut rng = Rng::new(3);
    let x = t2(3, 5, &rng.uniform_vec(15, -1.0, 1.0));
    let err = grad_check_in(
        || Tape::training(21),
        |tape, v| {
            let y = tape.dropout(v, 0.5, 55)?;
            let sq = tape.mul(y, y)?;
            tape.sum(sq)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn binary_op_shape_mismatch_is_dimension_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(t2(2, 3, &[0.0; 6]), false).unwrap();
    let b = tape.leaf(t2(3, 2, &[0.0; 6]), false).unwrap();
    let err = tape.add(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
}

#[test]
fn non_finite_leaf_is_numeric_error() {
    let mut tape = Tape::new();
    let t = DiffTensor {
        shape: vec![2],
        data: vec![1.0, f64::INFINITY],
        grad: None,
        requires_grad: false,
    };
    assert!(matches!(tape.leaf(t, false), Err(Error::Numeric(_))));
}
