//! Differentiable fp64 substrate: tensors, a per-step tape, reverse-mode
//! accumulation and a central-difference verifier.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, finite_difference_check_many};
pub use tape::{sigmoid, softmax, Gradients, Tape, Unary, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let i = tape.leaf(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let out = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let v = tape.leaf(m(&[&[5.0], &[7.0]]));
        let out = tape.matmul(i, v).unwrap();
        assert_eq!(tape.value(out).data(), &[5.0, 7.0]);

        let ones = tape.leaf(m(&[&[1.0], &[1.0]]));
        let out = tape.matmul(a, ones).unwrap();
        assert_eq!(tape.value(out).shape(), &[2, 1]);
        assert_eq!(tape.value(out).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    fn conv(x: &[f64], k: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(vec![x.len(), 1], x.to_vec()).unwrap());
        let kv = tape.leaf(Tensor::new(vec![k.len(), 1, 1], k.to_vec()).unwrap());
        let b = tape.leaf(Tensor::vector(vec![0.0]));
        let out = tape.conv1d_causal(xv, kv, b).unwrap();
        tape.value(out).data().to_vec()
    }

    #[test]
    fn conv1d_causal_examples() {
        assert_eq!(conv(&[1.0, 2.0, 3.0], &[1.0, 1.0]), vec![1.0, 3.0, 5.0]);
        assert_eq!(conv(&[4.0, -1.0, 0.5], &[1.0]), vec![4.0, -1.0, 0.5]);
        assert_eq!(conv(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]), vec![1.0, 2.0, 3.0]);
        // width wider than the series is pure padding
        assert_eq!(conv(&[2.0], &[1.0, 5.0, 7.0]), vec![2.0]);
    }

    #[test]
    fn zero_length_input_rejected() {
        assert!(Tensor::new(vec![0, 1], vec![]).is_err());
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sigmoid(z);
        let t = tape.tanh(z);
        assert_eq!(tape.value(s).item(), 0.5);
        assert_eq!(tape.value(t).item(), 0.0);
        let v = tape.leaf(Tensor::vector(vec![-2.0, 3.0]));
        let sq = tape.square(v);
        assert_eq!(tape.value(sq).data(), &[4.0, 9.0]);
        let r = tape.unary(v, Unary::Relu).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 3.0]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(
            tape.log(v),
            Err(crate::Error::LogNonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let s = tape.softmax(a);
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        let one = tape.leaf(Tensor::vector(vec![-3.7]));
        let s = tape.softmax(one);
        assert_eq!(tape.value(s).data(), &[1.0]);
        let b = tape.leaf(Tensor::vector(vec![1f64.ln(), 3f64.ln()]));
        let s = tape.softmax(b);
        let d = tape.value(s).data();
        assert!((d[0] - 0.25).abs() < 1e-15 && (d[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sigmoid(x);
        assert_eq!(tape.backward(s).unwrap().wrt(x).item(), 0.25);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let s = tape.square(x);
        assert_eq!(tape.backward(s).unwrap().wrt(x).item(), 6.0);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let c = tape.constant(Tensor::scalar(4.0));
        let g = tape.backward(c).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0]);
        assert!(!g.reached(x));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(crate::Error::NonScalarLoss(_))));
    }

    #[test]
    fn backward_is_repeatable() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![0.3, -1.2, 0.7, 2.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![2, 1], vec![0.5, -0.25]).unwrap());
        let y = tape.matmul(x, w).unwrap();
        let t = tape.tanh(y);
        let l = tape.sum(t);
        let g1 = tape.backward(l).unwrap();
        let g2 = tape.backward(l).unwrap();
        assert_eq!(g1.wrt(x), g2.wrt(x));
        assert_eq!(g1.wrt(w), g2.wrt(w));
    }

    #[test]
    fn gradcheck_sum_of_squares_and_constant() {
        let x = Tensor::vector(vec![0.3, -1.7, 2.2, 0.01]);
        let err = finite_difference_check(
            |t, v| {
                let s = t.square(v);
                Ok(t.sum(s))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        let err = finite_difference_check(|t, _| Ok(t.constant(Tensor::scalar(2.0))), &x, 1e-5)
            .unwrap();
        assert_eq!(err, 0.0);
    }

    /// Each primitive composed with a fixed random linear readout so that
    /// every output coordinate contributes to the scalar.
    fn readout(tape: &mut Tape, y: Var, rng: &mut ChaCha8Rng) -> crate::Result<Var> {
        let shape = tape.shape(y).to_vec();
        let n: usize = shape.iter().product();
        let w = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let w = tape.constant(w);
        let p = tape.mul(y, w)?;
        Ok(tape.sum(p))
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn every_primitive_passes_gradcheck_at_random_points() {
        let eps = 1e-5;
        let tol = 1e-6;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_tensor(&mut rng, &[3, 4], -2.0, 2.0);
            let b = random_tensor(&mut rng, &[4, 2], -2.0, 2.0);
            let c = random_tensor(&mut rng, &[3, 4], -2.0, 2.0);
            let pos = random_tensor(&mut rng, &[3, 4], 0.5, 3.0);
            let k = random_tensor(&mut rng, &[3, 4, 2], -1.0, 1.0);
            let bias = random_tensor(&mut rng, &[2], -1.0, 1.0);
            let rseed = rng.random::<u64>();
            let ro = |t: &mut Tape, y: Var| readout(t, y, &mut ChaCha8Rng::seed_from_u64(rseed));

            let checks: Vec<(&str, f64)> = vec![
                (
                    "matmul",
                    finite_difference_check_many(
                        |t, v| {
                            let y = t.matmul(v[0], v[1])?;
                            ro(t, y)
                        },
                        &[a.clone(), b.clone()],
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "add/sub/mul",
                    finite_difference_check_many(
                        |t, v| {
                            let s = t.add(v[0], v[1])?;
                            let d = t.sub(s, v[1])?;
                            let p = t.mul(d, v[1])?;
                            ro(t, p)
                        },
                        &[a.clone(), c.clone()],
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "conv1d_causal",
                    finite_difference_check_many(
                        |t, v| {
                            let y = t.conv1d_causal(v[0], v[1], v[2])?;
                            ro(t, y)
                        },
                        &[a.clone(), k.clone(), bias.clone()],
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "add_bias",
                    finite_difference_check_many(
                        |t, v| {
                            let y = t.add_bias(v[0], v[1])?;
                            ro(t, y)
                        },
                        &[b.clone(), bias.clone()],
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "softmax",
                    finite_difference_check(
                        |t, v| {
                            let y = t.softmax(v);
                            ro(t, y)
                        },
                        &a,
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "log_softmax",
                    finite_difference_check(
                        |t, v| {
                            let y = t.log_softmax(v);
                            ro(t, y)
                        },
                        &a,
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "concat/slice/transpose/gather/reshape",
                    finite_difference_check_many(
                        |t, v| {
                            let cc = t.concat_cols(&[v[0], v[1]])?;
                            let cr = t.concat_rows(&[cc, cc])?;
                            let s = t.slice_rows(cr, 2, 3)?;
                            let tr = t.transpose(s)?;
                            let g = t.gather(tr, &[0, 5, 5, 17])?;
                            let r = t.reshape(g, &[2, 2])?;
                            let sc = t.scale(r, -1.5);
                            let y = t.add_scalar(sc, 0.25);
                            ro(t, y)
                        },
                        &[a.clone(), c.clone()],
                        eps,
                    )
                    .unwrap(),
                ),
                (
                    "mean",
                    finite_difference_check(|t, v| Ok(t.mean(v)), &a, eps).unwrap(),
                ),
            ];
            for (name, err) in checks {
                assert!(err < tol, "{name} seed {seed}: {err}");
            }
            for kind in [
                Unary::Sigmoid,
                Unary::Tanh,
                Unary::Relu,
                Unary::Exp,
                Unary::Log,
                Unary::Square,
            ] {
                let x = if kind == Unary::Log { &pos } else { &a };
                let err = finite_difference_check(
                    |t, v| {
                        let y = t.unary(v, kind)?;
                        ro(t, y)
                    },
                    x,
                    eps,
                )
                .unwrap();
                assert!(err < tol, "{kind:?} seed {seed}: {err}");
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_slices_sum_to_one(
            rows in 1usize..5,
            vals in proptest::collection::vec(-50.0f64..50.0, 1..40),
        ) {
            let cols = vals.len();
            let data: Vec<f64> = (0..rows).flat_map(|r| vals.iter().map(move |v| v * (r as f64 + 1.0) / 3.0)).collect();
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::new(vec![rows, cols], data).unwrap());
            let s = tape.softmax(x);
            for slice in tape.value(s).data().chunks(cols) {
                let total: f64 = slice.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(slice.iter().all(|&v| v > 0.0));
            }
        }

        #[test]
        fn conv1d_is_causal(
            x in proptest::collection::vec(-5.0f64..5.0, 2..20),
            k in proptest::collection::vec(-2.0f64..2.0, 1..4),
            cut in 0usize..20,
        ) {
            let t = cut % x.len();
            let mut zeroed = x.clone();
            zeroed[t + 1..].iter_mut().for_each(|v| *v = 0.0);
            let full = conv(&x, &k);
            let part = conv(&zeroed, &k);
            prop_assert_eq!(&full[..=t], &part[..=t]);
        }
    }
}
