use frontalize::networks::{
    Checkpoint, ConvExtractor, DiscriminatorConfig, Generator, GeneratorConfig,
    GlobalDiscriminator, IdentityExtractor, LocalDiscriminator, Network,
};
use frontalize_tensor::check::{central_difference, max_relative_error};
use frontalize_tensor::{Graph, ParamSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn tiny_generator(seed: u64) -> Generator {
    let cfg = GeneratorConfig {
        size: 32,
        channels: 3,
        base_channels: 4,
        max_channels: 8,
        res_blocks: 1,
    };
    Generator::new(cfg, seed).unwrap()
}

fn tiny_disc() -> DiscriminatorConfig {
    DiscriminatorConfig {
        size: 32,
        channels: 3,
        base_channels: 4,
    }
}

#[test]
fn generator_shape_range_and_determinism() {
    let g = Generator::new(GeneratorConfig::toy(32), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 3, 32, 32], &mut rng);
    let y = g.infer(&x).unwrap();
    assert_eq!(y.shape(), x.shape());
    for i in (0..y.len()).step_by(y.len() / 1000) {
        assert!((-1.0..=1.0).contains(&y.data()[i]));
    }
    assert!(y.bit_eq(&g.infer(&x).unwrap()));
    assert!(g.infer(&random(&[1, 3, 16, 16], &mut rng)).is_err());
}

#[test]
fn untrained_generator_reproduces_its_input() {
    let g = Generator::new(GeneratorConfig::toy(32), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 3, 32, 32], &mut rng).map(|v| 0.99 * v);
    let y = g.infer(&x).unwrap();
    let worst = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn init_is_seeded() {
    let a = Generator::new(GeneratorConfig::toy(32), 5).unwrap();
    let b = Generator::new(GeneratorConfig::toy(32), 5).unwrap();
    let c = Generator::new(GeneratorConfig::toy(32), 6).unwrap();
    assert!(a.params().bit_eq(b.params()));
    assert!(!a.params().bit_eq(c.params()));
    let d = LocalDiscriminator::new(DiscriminatorConfig::toy(32), 5).unwrap();
    let e = LocalDiscriminator::new(DiscriminatorConfig::toy(32), 5).unwrap();
    assert!(d.params().bit_eq(e.params()));
}

#[test]
fn generator_128_parameter_count_matches_golden() {
    let golden: usize = include_str!("golden/generator128_params.txt")
        .trim()
        .parse()
        .unwrap();
    let g = Generator::new(GeneratorConfig::standard(128), 0).unwrap();
    assert_eq!(g.params().count(), golden);
    assert_eq!(g.config().downsamplings(), 4);
    assert_eq!(
        Generator::new(GeneratorConfig::standard(128), 1)
            .unwrap()
            .params()
            .count(),
        golden
    );
}

#[test]
fn global_disc_range_bias_monotonicity_and_batching() {
    let mut d = GlobalDiscriminator::new(DiscriminatorConfig::toy(32), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[3, 3, 32, 32], &mut rng);
    let batch = d.infer(&x).unwrap();
    assert_eq!(batch.len(), 3);
    for (i, p) in batch.iter().enumerate() {
        assert!(*p > 0.0 && *p < 1.0);
        let single = Tensor::new(&[1, 3, 32, 32], x.sample(i).to_vec()).unwrap();
        assert!((d.infer(&single).unwrap()[0] - p).abs() < 1e-6);
    }
    let bias = d.final_bias_index();
    let mut last = batch[0];
    for _ in 0..5 {
        d.params_mut().tensors_mut()[bias].data_mut()[0] += 0.5;
        let p = d.infer(&x).unwrap()[0];
        assert!(p > last);
        last = p;
    }
}

#[test]
fn local_disc_sensitivity_and_asymmetry() {
    let d = LocalDiscriminator::new(DiscriminatorConfig::toy(32), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = random(&[1, 3, 32, 32], &mut rng);
    let s = random(&[1, 3, 32, 32], &mut rng);
    let f = random(&[1, 3, 32, 32], &mut rng);
    let p = d.infer([&h, &s, &f]).unwrap()[0];
    assert!(p > 0.0 && p < 1.0);
    let zero = Tensor::zeros(&[1, 3, 32, 32]);
    assert!((d.infer([&zero, &s, &f]).unwrap()[0] - p).abs() > 0.0);
    assert!((d.infer([&s, &f, &h]).unwrap()[0] - p).abs() > 0.0);
    let small = Tensor::zeros(&[1, 3, 16, 16]);
    assert!(d.infer([&small, &s, &f]).is_err());
}

type Forward<'a> = dyn Fn(&mut Graph, &ParamSet, Option<u32>, Var) -> Var + 'a;

/// Max relative error of parameter and input gradients of `Σ r ⊙ net(x)`
/// against central differences, sampling a few entries per tensor.
fn network_grad_error(params: &ParamSet, input: &Tensor, run: &Forward) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let probe = |params: &ParamSet, x: &Tensor| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = run(&mut g, params, None, xv);
        g.value(y).data().to_vec()
    };
    let out_len = probe(params, input).len();
    let r: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dot = |v: Vec<f64>| v.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();

    let mut g = Graph::new();
    let xv = g.tracked_input(input.clone());
    let y = run(&mut g, params, Some(9), xv);
    let rt = Tensor::new(g.value(y).shape(), r.clone()).unwrap();
    let value = dot(g.value(y).data().to_vec());
    let loss = g.scalar_fn(y, value, rt).unwrap();
    let grads = g.backward(loss).unwrap();
    let pg = g.param_grads(&grads, 9, params.len());
    let gx = grads.wrt(xv).unwrap().clone();

    let mut worst: f64 = 0.0;
    for (ti, t) in params.tensors().iter().enumerate() {
        let idx: Vec<usize> = (0..3).map(|_| rng.gen_range(0..t.len())).collect();
        let numeric = central_difference(
            |probe_t| {
                let mut p = params.clone();
                p.tensors_mut()[ti] = probe_t.clone();
                dot(probe(&p, input))
            },
            t,
            &idx,
            1e-5,
        );
        let analytic: Vec<f64> = idx
            .iter()
            .map(|&i| pg[ti].as_ref().unwrap().data()[i])
            .collect();
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-5));
    }
    let idx: Vec<usize> = (0..24).map(|_| rng.gen_range(0..input.len())).collect();
    let numeric = central_difference(|x| dot(probe(params, x)), input, &idx, 1e-5);
    let analytic: Vec<f64> = idx.iter().map(|&i| gx.data()[i]).collect();
    worst.max(max_relative_error(&analytic, &numeric, 1e-5))
}

#[test]
fn generator_backward_matches_finite_differences() {
    let gen = tiny_generator(4);
    assert!(gen.params().count() <= 50_000);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[1, 3, 32, 32], &mut rng);
    // The head starts at zero, which would hide every gradient behind it.
    let mut params = gen.params().clone();
    for (name, t) in params.names().to_vec().iter().zip(params.tensors_mut()) {
        if name.starts_with("head.") {
            *t = random(t.shape(), &mut rng).map(|v| 0.3 * v);
        }
    }
    let err = network_grad_error(&params, &x, &|g, p, group, x| {
        let b = p.bind(g, group);
        gen.forward(g, &b, x).unwrap()
    });
    assert!(err < 1e-3, "generator gradient error {err}");
}

#[test]
fn discriminator_backward_matches_finite_differences() {
    let d1 = GlobalDiscriminator::new(tiny_disc(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 3, 32, 32], &mut rng);
    let err = network_grad_error(d1.params(), &x, &|g, p, group, x| {
        let b = p.bind(g, group);
        d1.forward(g, &b, x).unwrap()
    });
    assert!(err < 1e-3, "global discriminator gradient error {err}");

    let d2 = LocalDiscriminator::new(tiny_disc(), 6).unwrap();
    assert!(d2.params().count() <= 50_000);
    let masks: Vec<Tensor> = (0..3)
        .map(|_| random(&[1, 1, 32, 32], &mut rng).map(f64::abs))
        .collect();
    let err = network_grad_error(d2.params(), &x, &|g, p, group, x| {
        let b = p.bind(g, group);
        let views = [0, 1, 2].map(|i| {
            let m = Tensor::stack(&[&masks[i], &masks[i]])
                .unwrap()
                .reshape(&[2, 1, 32, 32])
                .unwrap();
            g.mul_mask(x, m).unwrap()
        });
        d2.forward(g, &b, views).unwrap()
    });
    assert!(err < 1e-3, "local discriminator gradient error {err}");
}

#[test]
fn extractor_is_deterministic_with_fixed_dim() {
    let ex = ConvExtractor::new(8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&[2, 3, 32, 32], &mut rng);
    let a = ex.embed(&x).unwrap();
    assert_eq!(a.shape(), &[2, ex.embedding_dim()]);
    assert_eq!(ex.embedding_dim(), 256);
    assert!(a.bit_eq(&ConvExtractor::new(8, 3).embed(&x).unwrap()));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let gen = Generator::new(GeneratorConfig::toy(32), 9).unwrap();
    let mut ck = Checkpoint::new(gen.arch_id(), 9, 12, 1, serde_json::json!({"k": 1}));
    ck.push_set("g", gen.params());
    ck.push(
        "extra",
        Tensor::new(&[2], vec![-0.0, f64::MIN_POSITIVE]).unwrap(),
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.header.arch, gen.arch_id());
    assert_eq!(back.header.step, 12);
    let params = back.param_set("g", gen.params()).unwrap();
    assert!(params.bit_eq(gen.params()));
    assert!(back.get("extra").unwrap().bit_eq(ck.get("extra").unwrap()));
    assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    assert!(Checkpoint::from_bytes(&bytes).is_err());

    let mut other = Generator::new(GeneratorConfig::standard(128), 0).unwrap();
    assert!(other.load_params(params).is_err());
}
