//! Forward values and finite-difference gradient checks for every
//! differentiable graph operation.

use langgrid::rng::rng_from_seed;
use langgrid::tensor::layers::{lstm_cell, LstmWeights};
use langgrid::tensor::{grad_check, GradCheckOptions, Graph, Padding, Tensor, Var};
use langgrid::{Error, Result};
use proptest::prelude::*;
use rand::Rng;

const SEEDS: u64 = 10;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any output to a scalar with fixed pseudo-random weights so every
/// output coordinate influences the checked gradient.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let w = g.input(random(&g.shape(y).to_vec(), seed ^ 0xABCD));
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check<F>(shapes: &[&[usize]], build: F, tol: f64) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Copy,
{
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let inputs: Vec<Tensor> = shapes
            .iter()
            .enumerate()
            .map(|(k, s)| random(s, seed * 31 + k as u64))
            .collect();
        let report = grad_check(
            &inputs,
            |g, v| {
                let y = build(g, v)?;
                weighted_sum(g, y, seed)
            },
            GradCheckOptions {
                tolerance: tol,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
        worst = worst.max(report.max_rel_error);
    }
    worst
}

#[test]
fn matmul_values_and_gradients() {
    let mut g = Graph::new();
    let eye = g.input(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
    let b = g.input(Tensor::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]).unwrap());
    let y = g.matmul(eye, b).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = g.input(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
    let z = g.input(Tensor::zeros(&[2, 1]));
    let y = g.matmul(a, z).unwrap();
    assert_eq!(g.value(y).data(), &[0.0]);

    assert!(matches!(g.matmul(a, a), Err(Error::Shape(_))));
    check(&[&[3, 4], &[4, 2]], |g, v| g.matmul(v[0], v[1]), 1e-4);
}

#[test]
fn conv2d_values_and_gradients() {
    let mut g = Graph::new();
    let x = g.input(random(&[1, 4, 4], 1));
    let k = g.input(Tensor::full(&[1, 1, 1, 1], 1.0));
    let y = g.conv2d(x, k, None, 1, Padding::Same).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let zeros = g.input(Tensor::zeros(&[2, 5, 5]));
    let k = g.input(random(&[3, 2, 3, 3], 2));
    let b = g.input(Tensor::zeros(&[3]));
    let y = g.conv2d(zeros, k, Some(b), 1, Padding::Same).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));

    let y = g.conv2d(zeros, k, None, 2, Padding::Same).unwrap();
    assert_eq!(g.shape(y), &[3, 3, 3]);
    let big = g.input(random(&[2, 7, 7], 3));
    let small = g.input(random(&[2, 3, 3], 4));
    assert!(matches!(g.conv2d(small, big, None, 1, Padding::Valid), Err(Error::Shape(_))));

    check(&[&[2, 5, 5], &[3, 2, 3, 3], &[3]], |g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, Padding::Same), 1e-4);
    check(&[&[2, 8, 8], &[3, 2, 5, 5]], |g, v| g.conv2d(v[0], v[1], None, 2, Padding::Same), 1e-4);
    check(&[&[2, 6, 6], &[2, 2, 3, 3]], |g, v| g.conv2d(v[0], v[1], None, 1, Padding::Valid), 1e-4);
}

#[test]
fn conv_transpose2d_values_and_gradients() {
    let mut g = Graph::new();
    let x = g.input(random(&[1, 3, 3], 5));
    let k = g.input(Tensor::full(&[1, 1, 1, 1], 1.0));
    let y = g.conv_transpose2d(x, k, None, 1).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let x = g.input(random(&[2, 4, 4], 6));
    let k = g.input(random(&[2, 3, 5, 5], 7));
    let y = g.conv_transpose2d(x, k, None, 2).unwrap();
    assert_eq!(g.shape(y), &[3, 8, 8]);
    assert!(matches!(g.conv_transpose2d(x, k, None, 0), Err(Error::Shape(_))));
    let wrong = g.input(random(&[3, 3, 5, 5], 8));
    assert!(matches!(g.conv_transpose2d(x, wrong, None, 2), Err(Error::Shape(_))));

    check(&[&[2, 3, 3], &[2, 3, 5, 5], &[3]], |g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), 2), 1e-4);
    check(&[&[3, 4, 4], &[3, 2, 3, 3]], |g, v| g.conv_transpose2d(v[0], v[1], None, 1), 1e-4);
}

#[test]
fn conv1d_values_and_gradients() {
    let mut g = Graph::new();
    let x = g.input(random(&[2, 5], 9));
    let mut eye = Tensor::zeros(&[2, 2, 1]);
    eye.data_mut()[0] = 1.0;
    eye.data_mut()[3] = 1.0;
    let k = g.input(eye);
    let y = g.conv1d(x, k, None).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let x = g.input(random(&[3, 1], 10));
    let k = g.input(random(&[4, 3, 3], 11));
    let y = g.conv1d(x, k, None).unwrap();
    assert_eq!(g.shape(y), &[4, 1]);

    check(&[&[3, 6], &[4, 3, 3], &[4]], |g, v| g.conv1d(v[0], v[1], Some(v[2])), 1e-4);
    check(&[&[2, 1], &[2, 2, 3]], |g, v| g.conv1d(v[0], v[1], None), 1e-4);
}

#[test]
fn tiled_convolution_equals_convolving_the_tile() {
    for seed in 0..SEEDS {
        let mut g = Graph::new();
        let ctx = g.input(random(&[4], seed));
        let k = g.input(random(&[3, 4, 5, 5], seed + 100));
        let tiled = g.tile(ctx, 8, 8).unwrap();
        let slow = g.conv2d(tiled, k, None, 2, Padding::Same).unwrap();
        let fast = g.conv2d_tiled(ctx, k, 8, 8, 2, Padding::Same).unwrap();
        assert_eq!(g.shape(slow), g.shape(fast));
        for (a, b) in g.value(slow).data().iter().zip(g.value(fast).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    check(&[&[4], &[3, 4, 5, 5]], |g, v| g.conv2d_tiled(v[0], v[1], 8, 8, 2, Padding::Same), 1e-4);
}

#[test]
fn elu_closed_form() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![3], vec![0.0, 1.0, -1.0]).unwrap());
    let y = g.elu(x).unwrap();
    let v = g.value(y).data();
    assert_eq!(v[0], 0.0);
    assert_eq!(v[1], 1.0);
    assert!((v[2] - (-0.632121)).abs() < 1e-6);
    assert!((v[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
}

#[test]
fn softmax_closed_form() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
    let y = g.softmax(x, 0).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    let x = g.input(Tensor::scalar(4.2));
    let y = g.softmax(x, 0).unwrap();
    assert_eq!(g.value(y).data(), &[1.0]);
    let x = g.input(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
    let y = g.softmax(x, 0).unwrap();
    for (a, b) in g.value(y).data().iter().zip([0.090031, 0.244728, 0.665241]) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn elementwise_and_structural_gradients() {
    check(&[&[3, 4]], |g, v| g.elu(v[0]), 1e-4);
    check(&[&[3, 4]], |g, v| g.sigmoid(v[0]), 1e-4);
    check(&[&[3, 4]], |g, v| g.tanh(v[0]), 1e-4);
    check(&[&[2, 3, 4]], |g, v| g.softmax(v[0], 1), 1e-4);
    check(&[&[2, 3, 4]], |g, v| g.softmax(v[0], 2), 1e-4);
    check(&[&[3, 4], &[3, 4]], |g, v| g.mul(v[0], v[1]), 1e-4);
    check(&[&[3, 4], &[3, 4]], |g, v| g.sub(v[0], v[1]), 1e-4);
    check(&[&[3, 4], &[4]], |g, v| g.add_bias(v[0], v[1]), 1e-4);
    check(&[&[3, 4]], |g, v| g.transpose(v[0]), 1e-4);
    check(&[&[3, 4]], |g, v| g.mean(v[0]), 1e-4);
    check(&[&[3, 4]], |g, v| g.scale(v[0], -2.5), 1e-4);
    check(&[&[2, 3, 4], &[2, 1, 4]], |g, v| g.concat(&[v[0], v[1]], 1), 1e-4);
    check(&[&[2, 3, 4]], |g, v| g.slice(v[0], 2, 1, 2), 1e-4);
    check(&[&[5, 3]], |g, v| g.gather(v[0], &[4, 0, 4]), 1e-4);
    check(&[&[3]], |g, v| g.tile(v[0], 2, 3), 1e-4);
    check(&[&[2, 6]], |g, v| g.reshape(v[0], &[3, 4]), 1e-4);
    check(
        &[&[4]],
        |g, v| g.correlate(v[0], &[Some(1), None, Some(3), Some(1), None, Some(0)], &[2, 3]),
        1e-4,
    );
    check(
        &[&[2, 12]],
        |g, v| {
            let s = g.softmax(v[0], 1)?;
            let s = g.reshape(s, &[2, 3, 4])?;
            g.soft_argmax(s)
        },
        1e-4,
    );
}

#[test]
fn abs_gradient_away_from_kink() {
    // Inputs shifted away from zero so the central difference never straddles the kink.
    for seed in 0..SEEDS {
        let mut x = random(&[3, 4], seed);
        x.data_mut().iter_mut().for_each(|v| *v += v.signum() * 0.1);
        let report = grad_check(&[x], |g, v| {
            let a = g.abs(v[0])?;
            weighted_sum(g, a, seed)
        }, GradCheckOptions::default())
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn lstm_cell_contracts() {
    let mut g = Graph::new();
    let w = LstmWeights {
        w_input: g.input(Tensor::zeros(&[3, 8])),
        w_hidden: g.input(Tensor::zeros(&[2, 8])),
        bias: g.input(Tensor::zeros(&[8])),
    };
    let x = g.input(random(&[1, 3], 1));
    let h0 = g.input(Tensor::zeros(&[1, 2]));
    let c0 = g.input(Tensor::zeros(&[1, 2]));
    let (h, c) = lstm_cell(&mut g, x, h0, c0, &w).unwrap();
    assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    assert!(g.value(c).data().iter().all(|&v| v == 0.0));

    // Saturated gates with large weights still give |h| <= 1.
    let w = LstmWeights {
        w_input: g.input(Tensor::full(&[3, 8], 50.0)),
        w_hidden: g.input(Tensor::full(&[2, 8], -50.0)),
        bias: g.input(Tensor::full(&[8], 10.0)),
    };
    let mut h = h0;
    let mut c = c0;
    for _ in 0..5 {
        (h, c) = lstm_cell(&mut g, x, h, c, &w).unwrap();
        assert!(g.value(h).data().iter().all(|v| v.abs() <= 1.0));
    }

    let bad = g.input(Tensor::zeros(&[1, 3]));
    assert!(lstm_cell(&mut g, x, bad, c0, &w).is_err());
}

#[test]
fn lstm_three_step_unroll_gradients() {
    let build = |g: &mut Graph, v: &[Var]| -> Result<Var> {
        let w = LstmWeights {
            w_input: v[0],
            w_hidden: v[1],
            bias: v[2],
        };
        let (mut h, mut c) = (v[4], v[5]);
        let mut outs = Vec::new();
        for t in 0..3 {
            let x_t = g.slice(v[3], 0, t, 1)?;
            (h, c) = lstm_cell(g, x_t, h, c, &w)?;
            outs.push(h);
        }
        outs.push(c);
        g.concat(&outs, 0)
    };
    check(&[&[3, 8], &[2, 8], &[8], &[3, 3], &[1, 2], &[1, 2]], build, 1e-4);
}

#[test]
fn backward_textbook_identities() {
    let x0 = random(&[2, 3], 4);
    let mut g = Graph::new();
    let x = g.leaf(x0.clone());
    let s = g.sum(x).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);

    let mut g = Graph::new();
    let x = g.leaf(x0.clone());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    let loss = g.scale(s, 0.5).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), x0.data());

    // A second sweep without reset accumulates.
    g.backward(loss).unwrap();
    let doubled: Vec<f64> = x0.data().iter().map(|v| 2.0 * v).collect();
    assert_eq!(g.grad(x).unwrap(), doubled.as_slice());
    g.zero_grad();
    assert!(g.grad(x).is_none());

    assert!(matches!(g.backward(x), Err(Error::Shape(_))));
}

#[test]
fn composed_pipeline_gradients() {
    check(
        &[&[2, 6, 6], &[3, 2, 3, 3], &[3]],
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 1, Padding::Same)?;
            let y = g.elu(y)?;
            let y = g.reshape(y, &[3, 36])?;
            g.softmax(y, 1)
        },
        1e-4,
    );
}

#[test]
fn backward_is_bit_deterministic() {
    let run = || {
        let mut g = Graph::new();
        let x = g.leaf(random(&[2, 8, 8], 1));
        let k = g.leaf(random(&[4, 2, 5, 5], 2));
        let y = g.conv2d(x, k, None, 2, Padding::Same).unwrap();
        let y = g.elu(y).unwrap();
        let t = g.leaf(random(&[4, 3, 5, 5], 3));
        let z = g.conv_transpose2d(y, t, None, 2).unwrap();
        let loss = weighted_sum(&mut g, z, 4).unwrap();
        g.backward(loss).unwrap();
        [x, k, t]
            .iter()
            .flat_map(|&v| g.grad(v).unwrap().iter().map(|f| f.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn grad_check_reference_accuracy() {
    // Linear function: the central difference is exact up to rounding.
    let report = grad_check(
        &[random(&[4, 3], 1), random(&[3, 2], 2)],
        |g, v| {
            let y = g.matmul(v[0], v[1])?;
            g.sum(y)
        },
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-8, "{report:?}");

    // ELU sampled away from zero.
    let mut x = random(&[20], 3);
    x.data_mut().iter_mut().for_each(|v| *v += v.signum() * 0.2);
    let report = grad_check(&[x], |g, v| {
        let y = g.elu(v[0])?;
        g.sum(y)
    }, GradCheckOptions::default())
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn non_finite_values_are_rejected() {
    let mut g = Graph::new();
    let x = g.input(Tensor::full(&[2], 1e200));
    assert!(matches!(g.mul(x, x), Err(Error::NonFinite(_))));
}

proptest! {
    #[test]
    fn softmax_normalizes_and_ignores_shifts(
        values in proptest::collection::vec(-30.0f64..30.0, 1..12),
        shift in -50.0f64..50.0,
    ) {
        let n = values.len();
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![n], values.clone()).unwrap());
        let xs = g.input(Tensor::new(vec![n], values.iter().map(|v| v + shift).collect()).unwrap());
        let y = g.softmax(x, 0).unwrap();
        let ys = g.softmax(xs, 0).unwrap();
        let total: f64 = g.value(y).data().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(g.value(y).data().iter().all(|&p| p >= 0.0));
        for (a, b) in g.value(y).data().iter().zip(g.value(ys).data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
