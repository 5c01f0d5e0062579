use super::*;
use crate::gradcheck::{max_relative_error, random_tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const TRIALS: u64 = 10;

/// Checks `sum(op(x) * weights)` against central differences for one input.
fn check_unary(name: &str, shape: Shape, op: impl Fn(&mut Tape<f64>, Var) -> Var) {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let x0 = random_tensor(shape, &mut rng);
        let out_shape = {
            let mut t = Tape::new();
            let x = t.leaf(x0.clone(), false);
            let y = op(&mut t, x);
            t.shape(y)
        };
        let weights = random_tensor(out_shape, &mut rng);
        let eval = |x: &Tensor<f64>| {
            let mut t = Tape::new();
            let xv = t.leaf(x.clone(), true);
            let y = op(&mut t, xv);
            let w = t.constant(weights.clone());
            let p = t.mul(y, w).unwrap();
            let l = t.sum(p);
            (t, xv, l)
        };
        let (tape, xv, loss) = eval(&x0);
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.get(xv).unwrap().clone();
        let numeric = finite_diff_grad(
            |x| {
                let (t, _, l) = eval(x);
                t.value(l).data()[0]
            },
            &x0,
            H,
        );
        let err = max_relative_error(&analytic, &numeric, 1e-8);
        assert!(err < TOL, "{name} trial {trial}: rel err {err}");
    }
}

#[test]
fn relu_values() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 2.5, -3.0]).unwrap());
    let y = t.relu(x);
    assert_eq!(t.value(y).data(), &[0.0, 2.5, 0.0]);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::zeros(Shape::new(1, 1, 1, 2)), true);
    let y = t.relu(x);
    let l = t.sum(y);
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn sum_gradient_is_all_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Tape::<f64>::new();
    let x = t.leaf(random_tensor(Shape::new(2, 3, 3, 2), &mut rng), true);
    let l = t.sum(x);
    let g = t.backward(l).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn half_sum_of_squares_gradient_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = random_tensor(Shape::new(1, 4, 4, 2), &mut rng);
    let mut t = Tape::<f64>::new();
    let x = t.leaf(x0.clone(), true);
    let sq = t.square(x);
    let s = t.sum(sq);
    let l = t.scale(s, 0.5);
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap(), &x0);
}

#[test]
fn finite_diff_of_linear_and_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(Shape::new(1, 3, 3, 1), &mut rng);
    let ones = finite_diff_grad(|t: &Tensor<f64>| t.sum(), &x, 1e-5);
    assert!(ones.data().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    let ident = finite_diff_grad(|t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>() / 2.0, &x, 1e-5);
    assert!(ident.zip_map(&x, |a, b| a - b).unwrap().max_abs() < 1e-9);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::zeros(Shape::new(1, 2, 2, 1)), true);
    assert!(matches!(t.backward(x), Err(Error::Autodiff(_))));
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = random_tensor(Shape::new(2, 4, 4, 2), &mut rng);
    let (a, b) = (0.7, -1.3);
    let grad_of = |mix: Option<(f64, f64)>, which: usize| {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(x0.clone(), true);
        let r = t.freq_activation(x);
        let l1 = t.sum(r);
        let sq = t.square(x);
        let l2 = t.mean(sq);
        let loss = match mix {
            Some((a, b)) => {
                let p = t.scale(l1, a);
                let q = t.scale(l2, b);
                t.add(p, q).unwrap()
            }
            None if which == 1 => l1,
            None => l2,
        };
        t.backward(loss).unwrap().get(x).unwrap().clone()
    };
    let combined = grad_of(Some((a, b)), 0);
    let g1 = grad_of(None, 1);
    let g2 = grad_of(None, 2);
    for i in 0..combined.len() {
        let expect = a * g1.data()[i] + b * g2.data()[i];
        let got = combined.data()[i];
        assert!((got - expect).abs() <= 1e-6 * expect.abs().max(1e-12), "{got} vs {expect}");
    }
}

#[test]
fn conv_identity_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x0 = random_tensor(Shape::new(2, 5, 6, 3), &mut rng);
    let mut w = Tensor::zeros(Shape::new(1, 1, 3, 3));
    for c in 0..3 {
        w.set([0, 0, c, c], 1.0);
    }
    let mut t = Tape::<f64>::new();
    let x = t.constant(x0.clone());
    let wv = t.constant(w);
    let bv = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 3)));
    let y = t.conv2d(x, wv, bv, Padding::Zero).unwrap();
    assert_eq!(t.value(y), &x0);
}

#[test]
fn conv_all_ones_zero_padding_counts_neighbours() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::full(Shape::new(1, 5, 5, 1), 1.0));
    let w = t.constant(Tensor::full(Shape::new(3, 3, 1, 1), 1.0));
    let b = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
    let y = t.conv2d(x, w, b, Padding::Zero).unwrap();
    let out = t.value(y);
    assert_eq!(out.get([0, 2, 2, 0]), 9.0);
    assert_eq!(out.get([0, 0, 0, 0]), 4.0);
    assert_eq!(out.get([0, 0, 2, 0]), 6.0);

    let yc = t.conv2d(x, w, b, Padding::Circular).unwrap();
    assert!(t.value(yc).data().iter().all(|&v| v == 9.0));
}

#[test]
fn conv_errors() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(Shape::new(1, 5, 5, 2)));
    let w_even = t.constant(Tensor::zeros(Shape::new(2, 2, 2, 1)));
    let w_bad_c = t.constant(Tensor::zeros(Shape::new(3, 3, 3, 1)));
    let b = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
    assert!(matches!(t.conv2d(x, w_even, b, Padding::Zero), Err(Error::Config(_))));
    assert!(matches!(t.conv2d(x, w_bad_c, b, Padding::Zero), Err(Error::Shape(_))));
}

#[test]
fn conv_preserves_spatial_dims_for_odd_kernels() {
    for k in [1, 3, 5, 7, 9] {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::zeros(Shape::new(1, 11, 7, 2)));
        let w = t.constant(Tensor::zeros(Shape::new(k, k, 2, 4)));
        let b = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 4)));
        let y = t.conv2d(x, w, b, Padding::Zero).unwrap();
        assert_eq!(t.shape(y), Shape::new(1, 11, 7, 4));
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    for padding in [Padding::Zero, Padding::Circular] {
        for trial in 0..TRIALS {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
            let x0 = random_tensor(Shape::new(2, 5, 4, 3), &mut rng);
            let w0 = random_tensor(Shape::new(3, 3, 3, 2), &mut rng);
            let b0 = random_tensor(Shape::new(1, 1, 1, 2), &mut rng);
            let r = random_tensor(Shape::new(2, 5, 4, 2), &mut rng);
            let eval = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
                let mut t = Tape::new();
                let (xv, wv, bv) = (t.leaf(x.clone(), true), t.leaf(w.clone(), true), t.leaf(b.clone(), true));
                let y = t.conv2d(xv, wv, bv, padding).unwrap();
                let rv = t.constant(r.clone());
                let p = t.mul(y, rv).unwrap();
                let l = t.sum(p);
                (t, [xv, wv, bv], l)
            };
            let (tape, vars, loss) = eval(&x0, &w0, &b0);
            let g = tape.backward(loss).unwrap();
            let scalar = |t: Tape<f64>, l: Var| t.value(l).data()[0];
            let nx = finite_diff_grad(|x| { let (t, _, l) = eval(x, &w0, &b0); scalar(t, l) }, &x0, H);
            let nw = finite_diff_grad(|w| { let (t, _, l) = eval(&x0, w, &b0); scalar(t, l) }, &w0, H);
            let nb = finite_diff_grad(|b| { let (t, _, l) = eval(&x0, &w0, b); scalar(t, l) }, &b0, H);
            for (v, n) in vars.iter().zip([nx, nw, nb]) {
                let err = max_relative_error(g.get(*v).unwrap(), &n, 1e-8);
                assert!(err < TOL, "conv {padding:?} trial {trial}: {err}");
            }
        }
    }
}

fn check_batch_norm(train: bool) {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let x0 = random_tensor(Shape::new(3, 3, 3, 2), &mut rng);
        let s0 = random_tensor(Shape::new(1, 1, 1, 2), &mut rng);
        let h0 = random_tensor(Shape::new(1, 1, 1, 2), &mut rng);
        let r = random_tensor(Shape::new(3, 3, 3, 2), &mut rng);
        let (rm, rv) = (vec![0.3, -0.2], vec![1.5, 0.7]);
        let eval = |x: &Tensor<f64>, s: &Tensor<f64>, h: &Tensor<f64>| {
            let mut t = Tape::new();
            let (xv, sv, hv) = (t.leaf(x.clone(), true), t.leaf(s.clone(), true), t.leaf(h.clone(), true));
            let mode = if train {
                BatchNormMode::Train { eps: 1e-3 }
            } else {
                BatchNormMode::Eval { mean: &rm, var: &rv, eps: 1e-3 }
            };
            let (y, _) = t.batch_norm(xv, sv, hv, mode).unwrap();
            let rr = t.constant(r.clone());
            let p = t.mul(y, rr).unwrap();
            let l = t.sum(p);
            (t, [xv, sv, hv], l)
        };
        let (tape, vars, loss) = eval(&x0, &s0, &h0);
        let g = tape.backward(loss).unwrap();
        let f = |t: Tape<f64>, l: Var| t.value(l).data()[0];
        let nx = finite_diff_grad(|x| { let (t, _, l) = eval(x, &s0, &h0); f(t, l) }, &x0, H);
        let ns = finite_diff_grad(|s| { let (t, _, l) = eval(&x0, s, &h0); f(t, l) }, &s0, H);
        let nh = finite_diff_grad(|h| { let (t, _, l) = eval(&x0, &s0, h); f(t, l) }, &h0, H);
        for (v, n) in vars.iter().zip([nx, ns, nh]) {
            let err = max_relative_error(g.get(*v).unwrap(), &n, 1e-8);
            assert!(err < TOL, "batch norm train={train} trial {trial}: {err}");
        }
    }
}

#[test]
fn batch_norm_train_gradients() {
    check_batch_norm(true);
}

#[test]
fn batch_norm_eval_gradients() {
    check_batch_norm(false);
}

#[test]
fn batch_norm_normalized_input_is_nearly_unchanged() {
    // two values per channel: +-1 has zero mean, unit (biased) variance
    let x0 = Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![1.0, -1.0]).unwrap();
    let mut t = Tape::<f64>::new();
    let x = t.constant(x0.clone());
    let s = t.constant(Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
    let h = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
    let (y, stats) = t.batch_norm(x, s, h, BatchNormMode::Train { eps: 1e-3 }).unwrap();
    let expect = 1.0 / (1.0f64 + 1e-3).sqrt();
    assert!((t.value(y).data()[0] - expect).abs() < 1e-12);
    assert!((t.value(y).data()[0] - 1.0).abs() < 1e-3);
    let stats = stats.unwrap();
    assert_eq!(stats.mean, vec![0.0]);
    assert_eq!(stats.var, vec![1.0]);
}

#[test]
fn batch_norm_constant_channel_maps_to_shift() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::full(Shape::new(2, 3, 3, 2), 4.2));
    let s = t.constant(Tensor::full(Shape::new(1, 1, 1, 2), 2.0));
    let h = t.constant(Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.5, -0.25]).unwrap());
    let (y, _) = t.batch_norm(x, s, h, BatchNormMode::Train { eps: 1e-3 }).unwrap();
    for px in t.value(y).data().chunks_exact(2) {
        assert!((px[0] - 0.5).abs() < 1e-12 && (px[1] + 0.25).abs() < 1e-12);
    }
}

#[test]
fn batch_norm_rejects_empty_batch_and_bad_affine() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(Shape::new(0, 3, 3, 2)));
    let s = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 2)));
    assert!(t.batch_norm(x, s, s, BatchNormMode::Train { eps: 1e-3 }).is_err());
    let x = t.constant(Tensor::zeros(Shape::new(1, 3, 3, 3)));
    assert!(t.batch_norm(x, s, s, BatchNormMode::Train { eps: 1e-3 }).is_err());
}

#[test]
fn elementwise_unary_gradients() {
    let s = Shape::new(2, 3, 3, 2);
    check_unary("relu", s, |t, x| t.relu(x));
    check_unary("freq_activation", s, |t, x| t.freq_activation(x));
    check_unary("sigmoid", s, |t, x| t.sigmoid(x));
    check_unary("abs", s, |t, x| t.abs(x));
    check_unary("square", s, |t, x| t.square(x));
    check_unary("scale", s, |t, x| t.scale(x, -1.7));
    check_unary("add_scalar", s, |t, x| t.add_scalar(x, 0.3));
    check_unary("ln", s, |t, x| {
        let sq = t.square(x);
        let pos = t.add_scalar(sq, 0.5);
        t.ln(pos)
    });
    check_unary("pow_const", s, |t, x| {
        let sq = t.square(x);
        let pos = t.add_scalar(sq, 0.1);
        t.pow_const(pos, 0.2856)
    });
    check_unary("complex_abs", s, |t, x| t.complex_abs(x).unwrap());
}

#[test]
fn reduction_and_window_gradients() {
    check_unary("sum", Shape::new(2, 3, 3, 2), |t, x| t.sum(x));
    check_unary("mean", Shape::new(2, 3, 3, 2), |t, x| t.mean(x));
    check_unary("mean_per_sample", Shape::new(3, 3, 3, 2), |t, x| t.mean_per_sample(x));
    check_unary("box_mean_valid", Shape::new(2, 9, 8, 1), |t, x| t.box_mean_valid(x, 7).unwrap());
    check_unary("avg_pool2", Shape::new(2, 7, 6, 2), |t, x| t.avg_pool2(x).unwrap());
}

#[test]
fn fourier_gradients() {
    let s = Shape::new(2, 6, 8, 4);
    check_unary("fft2c", s, |t, x| t.fft2c(x).unwrap());
    check_unary("ifft2c", s, |t, x| t.ifft2c(x).unwrap());
    check_unary("fft2c odd", Shape::new(1, 5, 7, 2), |t, x| t.fft2c(x).unwrap());
}

#[test]
fn binary_gradients() {
    let s = Shape::new(2, 3, 3, 2);
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let other = random_tensor::<f64>(s, &mut rng).map(|v| v.abs() + 0.5);
        let skip = random_tensor(Shape::new(2, 3, 3, 1), &mut rng);
        let o2 = other.clone();
        check_unary("add", s, move |t, x| { let c = t.constant(o2.clone()); t.add(x, c).unwrap() });
        let o2 = other.clone();
        check_unary("sub lhs", s, move |t, x| { let c = t.constant(o2.clone()); t.sub(x, c).unwrap() });
        let o2 = other.clone();
        check_unary("sub rhs", s, move |t, x| { let c = t.constant(o2.clone()); t.sub(c, x).unwrap() });
        let o2 = other.clone();
        check_unary("mul", s, move |t, x| { let c = t.constant(o2.clone()); t.mul(c, x).unwrap() });
        let o2 = other.clone();
        check_unary("div num", s, move |t, x| { let c = t.constant(o2.clone()); t.div(x, c).unwrap() });
        let o2 = other.clone();
        check_unary("div den", s, move |t, x| {
            let c = t.constant(o2.clone());
            let sq = t.square(x);
            let den = t.add_scalar(sq, 0.5);
            t.div(c, den).unwrap()
        });
        let sk = skip.clone();
        check_unary("add_tiled body", s, move |t, x| { let c = t.constant(sk.clone()); t.add_tiled(x, c).unwrap() });
        let o2 = other.clone();
        check_unary("add_tiled skip", Shape::new(2, 3, 3, 1), move |t, x| {
            let c = t.constant(o2.clone());
            t.add_tiled(c, x).unwrap()
        });
    }
}

#[test]
fn lerp_gradients_including_weight() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        let a0 = random_tensor(Shape::new(2, 4, 4, 2), &mut rng);
        let b0 = random_tensor(Shape::new(2, 4, 4, 2), &mut rng);
        let s0: Tensor<f64> = random_tensor(Shape::SCALAR, &mut rng);
        let eval = |a: &Tensor<f64>, b: &Tensor<f64>, s: &Tensor<f64>| {
            let mut t = Tape::new();
            let (av, bv, sv) = (t.leaf(a.clone(), true), t.leaf(b.clone(), true), t.leaf(s.clone(), true));
            let w = t.sigmoid(sv);
            let fb = t.fft2c(bv).unwrap();
            let y = t.lerp(av, fb, w).unwrap();
            let sq = t.square(y);
            let l = t.sum(sq);
            (t, [av, bv, sv], l)
        };
        let (tape, vars, loss) = eval(&a0, &b0, &s0);
        let g = tape.backward(loss).unwrap();
        let f = |t: Tape<f64>, l: Var| t.value(l).data()[0];
        let na = finite_diff_grad(|a| { let (t, _, l) = eval(a, &b0, &s0); f(t, l) }, &a0, H);
        let nb = finite_diff_grad(|b| { let (t, _, l) = eval(&a0, b, &s0); f(t, l) }, &b0, H);
        let ns = finite_diff_grad(|s| { let (t, _, l) = eval(&a0, &b0, s); f(t, l) }, &s0, H);
        for (v, n) in vars.iter().zip([na, nb, ns]) {
            let err = max_relative_error(g.get(*v).unwrap(), &n, 1e-8);
            assert!(err < TOL, "lerp trial {trial}: {err}");
        }
    }
}

#[test]
fn composite_chain_matches_finite_differences() {
    // conv -> BN -> activation -> FFT -> magnitude loss
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + trial);
        let x0 = random_tensor(Shape::new(2, 6, 6, 2), &mut rng);
        let w0 = random_tensor(Shape::new(3, 3, 2, 4), &mut rng);
        let eval = |x: &Tensor<f64>, w: &Tensor<f64>| {
            let mut t = Tape::new();
            let (xv, wv) = (t.leaf(x.clone(), true), t.leaf(w.clone(), true));
            let b = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 4)));
            let sc = t.constant(Tensor::full(Shape::new(1, 1, 1, 4), 1.3));
            let sh = t.constant(Tensor::full(Shape::new(1, 1, 1, 4), 0.1));
            let y = t.conv2d(xv, wv, b, Padding::Zero).unwrap();
            let (y, _) = t.batch_norm(y, sc, sh, BatchNormMode::Train { eps: 1e-3 }).unwrap();
            let y = t.freq_activation(y);
            let y = t.fft2c(y).unwrap();
            let y = t.complex_abs(y).unwrap();
            let l = t.mean(y);
            (t, [xv, wv], l)
        };
        let (tape, vars, loss) = eval(&x0, &w0);
        let g = tape.backward(loss).unwrap();
        let f = |t: Tape<f64>, l: Var| t.value(l).data()[0];
        let nx = finite_diff_grad(|x| { let (t, _, l) = eval(x, &w0); f(t, l) }, &x0, H);
        let nw = finite_diff_grad(|w| { let (t, _, l) = eval(&x0, w); f(t, l) }, &w0, H);
        for (v, n) in vars.iter().zip([nx, nw]) {
            let err = max_relative_error(g.get(*v).unwrap(), &n, 1e-8);
            assert!(err < TOL, "composite trial {trial}: {err}");
        }
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::<f32>::new();
        let x = t.leaf(random_tensor::<f32>(Shape::new(2, 8, 8, 2), &mut rng), true);
        let w = t.leaf(random_tensor::<f32>(Shape::new(3, 3, 2, 4), &mut rng), true);
        let b = t.constant(Tensor::zeros(Shape::new(1, 1, 1, 4)));
        let y = t.conv2d(x, w, b, Padding::Zero).unwrap();
        let y = t.fft2c(y).unwrap();
        let y = t.abs(y);
        let l = t.mean(y);
        let g = t.backward(l).unwrap();
        (t.value(l).clone(), g.get(x).unwrap().clone(), g.get(w).unwrap().clone())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.data()[0].to_bits(), b.0.data()[0].to_bits());
    assert!(a.1.data().iter().zip(b.1.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert!(a.2.data().iter().zip(b.2.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
#[should_panic(expected = "different tape")]
fn vars_cannot_cross_tapes() {
    let mut a = Tape::<f32>::new();
    let b = Tape::<f32>::new();
    let x = a.constant(Tensor::scalar(1.0));
    let _ = b.value(x);
}
