use proptest::prelude::*;

use super::*;

fn t2(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at2(i, p) * b.at2(p, j);
            }
            out.data_mut()[i * n + j] = s;
        }
    }
    out
}

#[test]
fn identity_matmul() {
    let a = t2(&[&[0.3, -1.2, 2.0], &[4.0, 0.5, -0.7], &[1.1, 2.2, 3.3]]);
    let tape = Tape::new();
    let i3 = tape.constant(Tensor::identity(3)).unwrap();
    let av = tape.constant(a.clone()).unwrap();
    assert_eq!(i3.matmul(av).unwrap().value(), a);
}

#[test]
fn integer_matmul_matches_triple_loop() {
    let a = t2(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
    let b = t2(&[&[7.0, 8.0], &[9.0, 10.0], &[11.0, 12.0]]);
    let expect = naive_matmul(&a, &b);
    assert_eq!(expect, t2(&[&[58.0, 64.0], &[139.0, 154.0]]));
    let tape = Tape::new();
    let out = tape
        .constant(a)
        .unwrap()
        .matmul(tape.constant(b).unwrap())
        .unwrap();
    assert_eq!(out.value(), expect);
}

#[test]
fn uniform_softmax() {
    let tape = Tape::new();
    let s = tape
        .constant(Tensor::from_vec(vec![0.0; 3]))
        .unwrap()
        .softmax_lastdim(None)
        .unwrap()
        .value();
    for v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn masked_softmax_zeroes_disallowed_entries() {
    let tape = Tape::new();
    let logits = tape.constant(t2(&[&[5.0, 1.0, -3.0]])).unwrap();
    let mask = t2(&[&[-MASK_LARGE, 0.0, -MASK_LARGE]]);
    let s = logits.softmax_lastdim(Some(&mask)).unwrap().value();
    assert_eq!(s.data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn quadratic_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
    let y = x.mul(x).unwrap().sum().unwrap();
    tape.backward(y).unwrap();
    assert_eq!(x.grad().unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn softmax_cross_entropy_composite_matches_finite_differences() {
    let logits = t2(&[&[0.2, -1.0, 0.7], &[1.5, 0.1, -0.3]]);
    let err = grad_check(
        |_t, v| {
            let p = v.softmax_lastdim(None)?;
            let lp = p.log()?;
            let onehot = v.tape().constant(t2(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]))?;
            lp.mul(onehot)?.sum()?.scale(-0.5)
        },
        &logits,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn linear_function_grad_check_is_tight() {
    let x = Tensor::from_vec(vec![0.5, -1.5, 2.0, 3.0]);
    let w = Tensor::from_vec(vec![1.0, -2.0, 0.25, 4.0]);
    let err = grad_check(
        |t, v| v.mul(t.constant(w.clone())?)?.sum()?.scale(3.0),
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn mse_grad_check() {
    let mut rng = crate::seed::rng(11, "test", 0);
    use rand::Rng as _;
    let a: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::new(vec![3, 4], a).unwrap();
    let target = Tensor::new(vec![3, 4], b).unwrap();
    let err = grad_check(|t, v| v.mse(t.constant(target.clone())?), &x, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn layer_norm_composite_grad_check() {
    let x = t2(&[&[0.1, 2.0, -1.0, 0.4], &[3.0, -2.0, 0.5, 0.0]]);
    let gamma = Tensor::from_vec(vec![1.0, 0.5, 2.0, -1.0]);
    let beta = Tensor::from_vec(vec![0.0, 0.1, -0.2, 0.3]);
    let err = grad_check(
        |t, v| {
            let y = v.layer_norm(t.constant(gamma.clone())?, t.constant(beta.clone())?)?;
            y.mul(y)?.relu()?.mean()
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn every_op_passes_finite_differences() {
    for suite in op_suites(3, 1e-5).unwrap() {
        assert!(suite.max_rel_error < 1e-4, "{suite:?}");
    }
}

#[test]
fn non_scalar_root_is_a_usage_error() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0])).unwrap();
    assert!(matches!(tape.backward(x), Err(AdError::Usage(_))));
}

#[test]
fn shape_mismatch_and_non_finite_are_reported() {
    let tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3])).unwrap();
    let b = tape.leaf(Tensor::zeros(&[3, 2])).unwrap();
    assert!(matches!(a.add(b), Err(AdError::Shape { .. })));
    assert!(matches!(a.matmul(a), Err(AdError::Shape { .. })));
    let neg = tape.leaf(Tensor::from_vec(vec![-1.0])).unwrap();
    assert!(matches!(neg.log(), Err(AdError::NonFinite { op: "log" })));
    assert!(matches!(
        a.cross_entropy_with_logits(&[0, 5]),
        Err(AdError::Shape { .. })
    ));
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let tape = Tape::new();
        let x = tape
            .leaf(t2(&[&[0.3, -0.2, 1.0], &[0.7, 0.1, -0.5]]))
            .unwrap();
        let w = tape.leaf(t2(&[&[1.0, 2.0], &[-1.0, 0.5], &[0.3, 0.3]])).unwrap();
        let loss = x
            .matmul(w)
            .unwrap()
            .softmax_lastdim(None)
            .unwrap()
            .cross_entropy_with_logits(&[1, 0])
            .unwrap();
        tape.backward(loss).unwrap();
        (x.grad().unwrap(), w.grad().unwrap())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    assert!(a1.bit_eq(&a2) && b1.bit_eq(&b2));
}

#[test]
fn batch_gradient_is_sum_of_per_sample_gradients() {
    let w0 = t2(&[&[0.5, -1.0], &[0.25, 2.0], &[-0.3, 0.1]]);
    let xs = [[1.0, 0.5, -2.0], [0.2, -0.1, 0.3], [3.0, 1.0, 1.0]];
    let targets = [1usize, 0, 1];
    let grad_of = |rows: &[[f64; 3]], tg: &[usize]| {
        let tape = Tape::new();
        let w = tape.leaf(w0.clone()).unwrap();
        let x = tape
            .constant(Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
            .unwrap();
        // mean CE scaled back to a sum
        let loss = x
            .matmul(w)
            .unwrap()
            .cross_entropy_with_logits(tg)
            .unwrap()
            .scale(rows.len() as f64)
            .unwrap();
        tape.backward(loss).unwrap();
        w.grad().unwrap()
    };
    let full = grad_of(&xs, &targets);
    let mut summed = vec![0.0; 6];
    for i in 0..3 {
        let g = grad_of(&xs[i..i + 1], &targets[i..i + 1]);
        summed.iter_mut().zip(g.data()).for_each(|(s, v)| *s += v);
    }
    for (a, b) in full.data().iter().zip(&summed) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn leaf_without_path_has_no_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(2.0)).unwrap();
    let y = tape.leaf(Tensor::scalar(3.0)).unwrap();
    let loss = x.mul(x).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(x.grad().unwrap().item(), 4.0);
    assert!(y.grad().is_none());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        vals in proptest::collection::vec(-30.0f64..30.0, 12),
        masked in proptest::collection::vec(any::<bool>(), 12),
    ) {
        let mut mask = Tensor::zeros(&[3, 4]);
        for (i, &m) in masked.iter().enumerate() {
            // keep the diagonal-like first entry of every row open
            if m && i % 4 != 0 {
                mask.data_mut()[i] = -MASK_LARGE;
            }
        }
        let tape = Tape::new();
        let s = tape
            .constant(Tensor::new(vec![3, 4], vals).unwrap())
            .unwrap()
            .softmax_lastdim(Some(&mask))
            .unwrap()
            .value();
        for r in 0..3 {
            let row = s.row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..4 {
                if mask.at2(r, j) != 0.0 {
                    prop_assert!(row[j] < 1e-30);
                }
            }
        }
    }
}
