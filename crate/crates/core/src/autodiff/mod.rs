//! Minimal dense-tensor engine with reverse-mode differentiation, covering
//! the operations the attention models need, plus the Adam optimizer.

mod adam;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{sigmoid_scalar, Gradients, Graph, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of `build` (which maps its leaves to a
    /// tensor) contracted with a fixed random projection.
    fn check_grad(
        seed: u64,
        inputs: Vec<Tensor>,
        build: impl Fn(&mut Graph, &[Var]) -> crate::Result<Var>,
    ) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scalar = |g: &mut Graph, vars: &[Var], proj: &Option<Tensor>| {
            let out = build(g, vars).unwrap();
            let p = proj.clone().unwrap();
            let pv = g.input(p).unwrap();
            let prod = g.mul(out, pv).unwrap();
            let n = g.value(prod).len();
            let flat = g.reshape(prod, &[n]).unwrap();
            g.sum(flat, 0).unwrap()
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
        let out = build(&mut g, &vars).unwrap();
        let out_shape = g.value(out).shape().to_vec();
        let proj = Some(rand_tensor(&mut rng, &out_shape));

        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
        let loss = scalar(&mut g, &vars, &proj);
        let grads = g.backward(loss).unwrap();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, t) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).unwrap().clone();
            for i in 0..t.len() {
                let eval = |delta: f64| {
                    let mut g = Graph::new();
                    let vars: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, t)| {
                            let mut t = t.clone();
                            if j == k {
                                t.data_mut()[i] += delta;
                            }
                            g.param(t).unwrap()
                        })
                        .collect();
                    let l = scalar(&mut g, &vars, &proj);
                    g.value(l).item()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn conv_identity_kernel() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![4, 2], vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap()).unwrap();
        let w = g.param(Tensor::new(vec![1, 2, 2], vec![1., 0., 0., 1.]).unwrap()).unwrap();
        let b = g.param(Tensor::zeros(&[2])).unwrap();
        let y = g.conv1d(x, w, b).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn conv_zero_padding_ones() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[5, 1], 1.0)).unwrap();
        let w = g.param(Tensor::full(&[5, 1, 1], 1.0)).unwrap();
        let b = g.param(Tensor::zeros(&[1])).unwrap();
        let y = g.conv1d(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3., 4., 5., 4., 3.]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[5, 2])).unwrap();
        let w = g.param(Tensor::zeros(&[3, 3, 1])).unwrap();
        let b = g.param(Tensor::zeros(&[1])).unwrap();
        let err = g.conv1d(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[5, 2]") && err.contains("[3, 3, 1]"), "{err}");
        let w = g.param(Tensor::zeros(&[4, 2, 1])).unwrap();
        assert!(g.conv1d(x, w, b).is_err());
    }

    #[test]
    fn dense_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 2], vec![1., 2.]).unwrap()).unwrap();
        let w = g.param(Tensor::new(vec![2, 1], vec![1., 1.]).unwrap()).unwrap();
        let b = g.param(Tensor::new(vec![1], vec![0.5]).unwrap()).unwrap();
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.5]);

        let w = g.param(Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap()).unwrap();
        let b = g.param(Tensor::zeros(&[2])).unwrap();
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn softmax_uniform_shift_and_extremes() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[4], 2.5)).unwrap();
        let y = g.softmax(x, 0).unwrap();
        assert!(g.value(y).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let base = Tensor::new(vec![2, 3], vec![0.1, -2.0, 3.0, 1.0, 1.5, -0.5]).unwrap();
        let shifted = Tensor::new(base.shape().to_vec(), base.data().iter().map(|v| v + 7.0).collect()).unwrap();
        let a = g.input(base).unwrap();
        let b = g.input(shifted).unwrap();
        let ya = g.softmax(a, 1).unwrap();
        let yb = g.softmax(b, 1).unwrap();
        assert!(g.value(ya).max_abs_diff(g.value(yb)) < 1e-15);

        let x = g.input(Tensor::new(vec![3], vec![1e3, -1e3, 0.0]).unwrap()).unwrap();
        let y = g.softmax(x, 0).unwrap();
        let v = g.value(y).data();
        assert!(v.iter().all(|&p| p >= 0.0));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reductions_and_weighted_sum() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[3, 4], 1.75)).unwrap();
        let m = g.mean(x, 0).unwrap();
        assert!(g.value(m).data().iter().all(|&v| v == 1.75));

        let x = g
            .input(Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap())
            .unwrap();
        let w = g.input(Tensor::new(vec![3, 1], vec![0., 1., 0.]).unwrap()).unwrap();
        let s = g.weighted_sum(x, w, 0).unwrap();
        assert_eq!(g.value(s).data(), &[3., 4.]);
    }

    #[test]
    fn bce_values() {
        let mut g = Graph::new();
        let z = g.param(Tensor::scalar(0.0)).unwrap();
        let l = g.bce_with_logits(z, &[1.0], 1.0).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);

        let z = g.param(Tensor::scalar(20.0)).unwrap();
        let l = g.bce_with_logits(z, &[1.0], 1.0).unwrap();
        let v = g.value(l).item();
        assert!(v.is_finite() && v < 1e-8);

        let z = g.param(Tensor::scalar(-800.0)).unwrap();
        let l = g.bce_with_logits(z, &[1.0], 1.0).unwrap();
        assert!((g.value(l).item() - 800.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_input_is_a_fault() {
        let mut g = Graph::new();
        let err = g.input(Tensor::scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, crate::Error::NumericFault(_)));
        let x = g.input(Tensor::scalar(1e300)).unwrap();
        let y = g.mul(x, x);
        assert!(matches!(y, Err(crate::Error::NumericFault(_))));
    }

    #[test]
    fn permute_and_concat_values() {
        let mut g = Graph::new();
        let x = g
            .input(Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap())
            .unwrap();
        let p = g.permute(x, &[1, 0]).unwrap();
        assert_eq!(g.value(p).shape(), &[3, 2]);
        assert_eq!(g.value(p).data(), &[1., 4., 2., 5., 3., 6.]);
        let c = g.concat(&[x, x]).unwrap();
        assert_eq!(g.value(c).shape(), &[4, 3]);
        assert!(g.permute(x, &[0, 0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, &[2, 6, 3]);
        let w = rand_tensor(&mut rng, &[5, 3, 4]);
        let b = rand_tensor(&mut rng, &[4]);
        let e = check_grad(1, vec![x, w, b], |g, v| g.conv1d(v[0], v[1], v[2]));
        assert!(e < 1e-6, "conv {e}");

        let x = rand_tensor(&mut rng, &[3, 2, 5]);
        let w = rand_tensor(&mut rng, &[5, 4]);
        let b = rand_tensor(&mut rng, &[4]);
        let e = check_grad(2, vec![x, w, b], |g, v| g.dense(v[0], v[1], v[2]));
        assert!(e < 1e-6, "dense {e}");

        let x = rand_tensor(&mut rng, &[3, 4, 2]);
        for axis in 0..3 {
            let e = check_grad(3, vec![x.clone()], |g, v| g.softmax(v[0], axis));
            assert!(e < 1e-6, "softmax axis {axis}: {e}");
        }

        let a = rand_tensor(&mut rng, &[3, 1, 4]);
        let b = rand_tensor(&mut rng, &[1, 2, 4]);
        let e = check_grad(4, vec![a, b], |g, v| g.mul(v[0], v[1]));
        assert!(e < 1e-6, "mul {e}");

        let x = rand_tensor(&mut rng, &[2, 3, 4]);
        let e = check_grad(5, vec![x.clone()], |g, v| g.permute(v[0], &[2, 0, 1]));
        assert!(e < 1e-6, "permute {e}");
        let e = check_grad(6, vec![x.clone()], |g, v| g.mean(v[0], 1));
        assert!(e < 1e-6, "mean {e}");
        let e = check_grad(7, vec![x.clone()], |g, v| g.sigmoid(v[0]));
        assert!(e < 1e-6, "sigmoid {e}");
        let e = check_grad(8, vec![x.clone()], |g, v| g.relu(v[0]));
        assert!(e < 1e-6, "relu {e}");

        let z = rand_tensor(&mut rng, &[5]);
        let e = check_grad(9, vec![z], |g, v| g.bce_with_logits(v[0], &[1., 0., 1., 1., 0.], 2.0));
        assert!(e < 1e-6, "bce {e}");
    }
}
