use frontalize_tensor::check::{central_difference, max_relative_error};
use frontalize_tensor::{Graph, ParamKey, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Contracts the op output with a fixed random tensor so the result is scalar.
fn project(g: &mut Graph, y: Var, weights: &Tensor) -> Var {
    let value: f64 = g
        .value(y)
        .data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum();
    g.scalar_fn(y, value, weights.clone()).unwrap()
}

/// Checks d/dx of `Σ r ⊙ op(x)` against central differences at every element.
fn check_unary(x: Tensor, op: impl Fn(&mut Graph, Var) -> Var) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut g = Graph::new();
    let xv = g.tracked_input(x.clone());
    let y = op(&mut g, xv);
    let r = random(g.value(y).shape(), &mut rng);
    let loss = project(&mut g, y, &r);
    let grads = g.backward(loss).unwrap();
    let analytic = grads.wrt(xv).unwrap().data().to_vec();

    let eval = |t: &Tensor| {
        let mut g = Graph::new();
        let xv = g.constant(t.clone());
        let y = op(&mut g, xv);
        g.value(y)
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let idx: Vec<usize> = (0..x.len()).collect();
    let numeric = central_difference(eval, &x, &idx, 1e-5);
    max_relative_error(&analytic, &numeric, 1e-6)
}

#[test]
fn conv_input_weight_and_bias_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 3, 6, 5], &mut rng);
    let w = random(&[4, 3, 3, 3], &mut rng);
    let b = random(&[4], &mut rng);
    let wc = w.clone();
    let bc = b.clone();
    let err = check_unary(x.clone(), move |g, x| {
        let w = g.constant(wc.clone());
        let b = g.constant(bc.clone());
        g.conv2d(x, w, Some(b), 2, 1).unwrap()
    });
    assert!(err < 1e-6, "input grad err {err}");

    // weight gradient through a parameter node
    let xc = x.clone();
    let bc = b.clone();
    let err = check_unary(w, move |g, w| {
        let x = g.constant(xc.clone());
        let b = g.constant(bc.clone());
        g.conv2d(x, w, Some(b), 1, 1).unwrap()
    });
    assert!(err < 1e-6, "weight grad err {err}");

    let err = check_unary(b, move |g, b| {
        let x = g.constant(x.clone());
        let w = g.constant(Tensor::full(&[4, 3, 3, 3], 0.1));
        g.conv2d(x, w, Some(b), 1, 0).unwrap()
    });
    assert!(err < 1e-6, "bias grad err {err}");
}

#[test]
fn instance_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 3, 4, 4], &mut rng);
    let gamma = random(&[3], &mut rng);
    let beta = random(&[3], &mut rng);
    let (gc, bc) = (gamma.clone(), beta.clone());
    let err = check_unary(x.clone(), move |g, x| {
        let ga = g.constant(gc.clone());
        let be = g.constant(bc.clone());
        g.instance_norm(x, ga, be, 1e-5).unwrap()
    });
    assert!(err < 1e-5, "input grad err {err}");
    let xc = x.clone();
    let err = check_unary(gamma, move |g, ga| {
        let x = g.constant(xc.clone());
        let be = g.constant(beta.clone());
        g.instance_norm(x, ga, be, 1e-5).unwrap()
    });
    assert!(err < 1e-6, "gamma grad err {err}");
}

#[test]
fn pointwise_and_structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 2, 4, 6], &mut rng);
    assert!(check_unary(x.clone(), |g, x| g.tanh(x)) < 1e-7);
    assert!(check_unary(x.clone(), |g, x| g.sigmoid(x)) < 1e-7);
    assert!(check_unary(x.map(|v| 0.9 * v), |g, x| g.clipped_atanh(x, 0.95)) < 1e-6);
    assert!(check_unary(x.clone(), |g, x| g.leaky_relu(x, 0.2)) < 1e-6);
    assert!(check_unary(x.clone(), |g, x| g.upsample2x(x).unwrap()) < 1e-7);
    assert!(check_unary(x.clone(), |g, x| g.avg_pool(x, 2).unwrap()) < 1e-7);
    assert!(check_unary(x.clone(), |g, x| g.avg_pool(x, 8).unwrap()) < 1e-7);
    assert!(check_unary(x.clone(), |g, x| g.global_avg_pool(x).unwrap()) < 1e-7);
    assert!(
        check_unary(x.clone(), |g, x| {
            let p = g.avg_pool(x, 2).unwrap();
            g.flatten(p).unwrap()
        }) < 1e-7
    );
    assert!(
        check_unary(x.clone(), |g, x| {
            let t = g.tanh(x);
            g.concat(x, t).unwrap()
        }) < 1e-7
    );
    assert!(
        check_unary(x.clone(), |g, x| {
            let t = g.tanh(x);
            g.add(x, t).unwrap()
        }) < 1e-7
    );
    let mask = random(&[2, 1, 4, 6], &mut rng);
    assert!(check_unary(x, move |g, x| g.mul_mask(x, mask.clone()).unwrap()) < 1e-7);
}

#[test]
fn shared_parameter_gradients_accumulate() {
    let w = Tensor::full(&[1, 1, 1, 1], 2.0);
    let mut g = Graph::new();
    let key = ParamKey { group: 7, index: 0 };
    let x = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let w1 = g.param(w.clone(), key);
    let w2 = g.param(w, key);
    let a = g.conv2d(x, w1, None, 1, 0).unwrap();
    let b = g.conv2d(x, w2, None, 1, 0).unwrap();
    let s = g.add(a, b).unwrap();
    let loss = project(&mut g, s, &Tensor::full(&[1, 1, 2, 2], 1.0));
    let grads = g.backward(loss).unwrap();
    let pg = g.param_grads(&grads, 7, 1);
    assert_eq!(pg[0].as_ref().unwrap().data(), &[8.0]);
    assert!(g.param_grads(&grads, 8, 1)[0].is_none());
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let t = g.tanh(x);
    assert!(!g.is_tracked(t));
}

proptest! {
    #[test]
    fn pooling_preserves_mean_of_divisible_images(seed in 0u64..500, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 4 * k;
        let x = random(&[1, 1, side, side], &mut rng);
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let p = g.avg_pool(v, k).unwrap();
        let m_in = x.data().iter().sum::<f64>() / x.len() as f64;
        let out = g.value(p);
        let m_out = out.data().iter().sum::<f64>() / out.len() as f64;
        prop_assert!((m_in - m_out).abs() < 1e-12);
    }
}
