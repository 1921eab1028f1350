//! Built-in self-checks: scalar-loop oracles, finite-difference gradient
//! checks, the exhaustive rank-1 oracle and protocol arithmetic.

use std::io::Cursor;
use std::time::Instant;

use frontalize_tensor::check::{central_difference, relative_error};
use frontalize_tensor::{Graph, ParamSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::{build_protocol, parse_manifest, ManifestMode, PoseBin, M2FPA_TRAIN_SUBJECTS};
use crate::evaluator::{manifest_hash, rank1, EmbeddingSet, Source};
use crate::losses::{
    bce_term, identity_loss, identity_loss_grad, pixel_loss, pixel_loss_grad, pyramid, tv_loss,
    tv_loss_grad, tv_value_grad,
};
use crate::networks::{
    hex_digest, ConvExtractor, DiscriminatorConfig, Generator, GeneratorConfig,
    GlobalDiscriminator, LocalDiscriminator, Network,
};
use crate::toy::protocol_manifest_records;
use crate::{Image, Result};

/// Subjects in the full-size synthetic manifest.
pub const FULL_SIZE_SUBJECTS: u32 = 229;
/// Train images, probes and gallery images of the full-size protocol.
pub const FULL_SIZE_COUNTS: (usize, usize, usize) = (258_552, 105_056, 67);

const GRAD_TOL: f64 = 1e-3;
const GRAD_FLOOR: f64 = 1e-5;
/// Whole-network probes sum thousands of outputs, so their central
/// differences carry round-off near 1e-8; the floor stays well above it.
const NET_GRAD_FLOOR: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
/// Pixels whose loss kink lies closer than this are left out of gradient checks.
const KINK_MARGIN: f64 = 1e-4;

/// Outcome of one check. `digest` fingerprints the check's artifacts and is
/// stable across runs with the same seed.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub digest: String,
}

impl CheckReport {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String, String)>) -> CheckReport {
    let start = Instant::now();
    let (passed, detail, digest) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}"), String::new()),
    };
    CheckReport {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
        digest,
    }
}

/// Every check at its default seed.
pub fn run_all() -> Vec<CheckReport> {
    vec![
        loss_oracles(11),
        gradient_checks(21),
        rank1_oracle(2024),
        protocol_arithmetic(FULL_SIZE_SUBJECTS, M2FPA_TRAIN_SUBJECTS, 0),
    ]
}

/// Synthetic manifest through strict parsing, then the split counts. At
/// full size the counts must equal [`FULL_SIZE_COUNTS`].
pub fn protocol_arithmetic(n_subjects: u32, train_subjects: usize, seed: u64) -> CheckReport {
    timed("protocol arithmetic", || {
        let mut text = Vec::new();
        for r in protocol_manifest_records(n_subjects) {
            serde_json::to_writer(&mut text, &r).expect("record serializes");
            text.push(b'\n');
        }
        let records = parse_manifest(Cursor::new(text), ManifestMode::Strict)?;
        let split = build_protocol(&records, train_subjects, seed)?;
        let got = (split.train.len(), split.probes.len(), split.gallery.len());
        let mut h = Sha256::new();
        for part in [&split.train, &split.probes, &split.gallery] {
            h.update(manifest_hash(part).as_bytes());
        }
        let full = n_subjects == FULL_SIZE_SUBJECTS && train_subjects == M2FPA_TRAIN_SUBJECTS;
        let passed = got.0 + got.1 + got.2 + split.test_subjects.len() * 27 == records.len()
            && (!full || got == FULL_SIZE_COUNTS);
        Ok((
            passed,
            format!(
                "{} records -> train {}, probes {}, gallery {}",
                records.len(),
                got.0,
                got.1,
                got.2
            ),
            hex_digest(&h.finalize()),
        ))
    })
}

fn random_image(w: usize, h: usize, c: usize, rng: &mut ChaCha8Rng) -> Image {
    let data = (0..w * h * c).map(|_| rng.gen_range(-0.95..0.95)).collect();
    Image::new(w, h, c, data).expect("sizes agree")
}

fn block_mean(im: &Image, c: usize, bx: usize, by: usize, k: usize) -> f64 {
    let (mut sum, mut count) = (0.0, 0.0);
    for y in by * k..((by + 1) * k).min(im.height()) {
        for x in bx * k..((bx + 1) * k).min(im.width()) {
            sum += im.get(x, y, c);
            count += 1.0;
        }
    }
    sum / count
}

fn pixel_oracle(a: &Image, b: &Image) -> f64 {
    let mut total = 0.0;
    for k in [1, 2, 4] {
        let w = (a.width() / k).max(1);
        let h = (a.height() / k).max(1);
        let mut acc = 0.0;
        for c in 0..a.channels() {
            for by in 0..h {
                for bx in 0..w {
                    acc += (block_mean(a, c, bx, by, k) - block_mean(b, c, bx, by, k)).abs();
                }
            }
        }
        total += acc / (w * h * a.channels()) as f64;
    }
    total / 3.0
}

fn tv_oracle(a: &Image) -> f64 {
    let mut total = 0.0;
    for c in 0..a.channels() {
        for y in 0..a.height() {
            for x in 0..a.width() {
                if x + 1 < a.width() {
                    total += (a.get(x + 1, y, c) - a.get(x, y, c)).abs();
                }
                if y + 1 < a.height() {
                    total += (a.get(x, y + 1, c) - a.get(x, y, c)).abs();
                }
            }
        }
    }
    total
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Pixel and TV losses against scalar loops on 100 random 8×8×3 pairs,
/// plus the 2×2 TV fixture.
pub fn loss_oracles(seed: u64) -> CheckReport {
    timed("loss oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst_pixel, mut worst_tv) = (0.0f64, 0.0f64);
        let mut h = Sha256::new();
        for _ in 0..100 {
            let a = random_image(8, 8, 3, &mut rng);
            let b = random_image(8, 8, 3, &mut rng);
            let (p, t) = (pixel_loss(&a, &b)?, tv_loss(&a)?);
            worst_pixel = worst_pixel.max(rel(p, pixel_oracle(&a, &b)));
            worst_tv = worst_tv.max(rel(t, tv_oracle(&a)));
            h.update(p.to_le_bytes());
            h.update(t.to_le_bytes());
        }
        let (fixture, _) = tv_value_grad(&[0.0, 1.0, 2.0, 3.0], 1, 2, 2);
        let passed = worst_pixel < 1e-9 && worst_tv < 1e-9 && fixture == 6.0;
        Ok((
            passed,
            format!(
                "max rel err pixel {worst_pixel:.1e}, tv {worst_tv:.1e}; 2x2 TV fixture {fixture}"
            ),
            hex_digest(&h.finalize()),
        ))
    })
}

fn masked_max_error(analytic: &[f64], numeric: &[f64], skip: &[bool]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .zip(skip)
        .filter(|(_, &s)| !s)
        .map(|((&a, &n), _)| relative_error(a, n, GRAD_FLOOR))
        .fold(0.0, f64::max)
}

fn plain_max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    masked_max_error(analytic, numeric, &vec![false; analytic.len()])
}

fn image_of(t: &Tensor) -> Image {
    let (_, c, h, w) = t.dims4().expect("4-d");
    Image::new(w, h, c, t.data().to_vec()).expect("sizes agree")
}

fn pixel_grad_error(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (y_hat, y) = (random_image(8, 8, 3, rng), random_image(8, 8, 3, rng));
    let (_, grad) = pixel_loss_grad(&y_hat, &y)?;
    let x = y_hat.to_tensor();
    let idx: Vec<usize> = (0..x.len()).collect();
    let numeric = central_difference(
        |t| pixel_loss(&image_of(t), &y).unwrap_or(f64::NAN),
        &x,
        &idx,
        FD_STEP,
    );
    let (la, lb) = (pyramid(&y_hat)?, pyramid(&y)?);
    let skip: Vec<bool> = idx
        .iter()
        .map(|&i| {
            let (c, py, px) = (i / 64, (i % 64) / 8, i % 8);
            [1, 2, 4].iter().enumerate().any(|(l, &k)| {
                (la[l].get(px / k, py / k, c) - lb[l].get(px / k, py / k, c)).abs() < KINK_MARGIN
            })
        })
        .collect();
    Ok(masked_max_error(&grad, &numeric, &skip))
}

fn tv_grad_error(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (w, h) = (7, 6);
    let y_hat = random_image(w, h, 3, rng);
    let (_, grad) = tv_loss_grad(&y_hat)?;
    let x = y_hat.to_tensor();
    let idx: Vec<usize> = (0..x.len()).collect();
    let numeric = central_difference(
        |t| tv_loss(&image_of(t)).unwrap_or(f64::NAN),
        &x,
        &idx,
        FD_STEP,
    );
    let skip: Vec<bool> = idx
        .iter()
        .map(|&i| {
            let (c, py, px) = (i / (w * h), (i % (w * h)) / w, i % w);
            let v = y_hat.get(px, py, c);
            let near = |x: usize, y: usize| (y_hat.get(x, y, c) - v).abs() < KINK_MARGIN;
            (px > 0 && near(px - 1, py))
                || (px + 1 < w && near(px + 1, py))
                || (py > 0 && near(px, py - 1))
                || (py + 1 < h && near(px, py + 1))
        })
        .collect();
    Ok(masked_max_error(&grad, &numeric, &skip))
}

fn identity_grad_error(rng: &mut ChaCha8Rng) -> Result<f64> {
    let ex = ConvExtractor::new(9, 3);
    let (y_hat, y) = (random_image(16, 16, 3, rng), random_image(16, 16, 3, rng));
    let (_, grad) = identity_loss_grad(&y_hat, &y, &ex)?;
    let x = y_hat.to_tensor();
    let idx: Vec<usize> = (0..x.len()).step_by(7).collect();
    let numeric = central_difference(
        |t| identity_loss(&image_of(t), &y, &ex).unwrap_or(f64::NAN),
        &x,
        &idx,
        FD_STEP,
    );
    let analytic: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
    Ok(plain_max_error(&analytic, &numeric))
}

fn adversarial_grad_error(rng: &mut ChaCha8Rng) -> Result<f64> {
    let d1 = GlobalDiscriminator::new(DiscriminatorConfig::toy(16), 4)?;
    let y_hat = random_image(16, 16, 3, rng).to_tensor();
    let loss = |t: &Tensor, track: bool| -> Result<(f64, Option<Tensor>)> {
        let mut g = Graph::new();
        let p = d1.bind(&mut g, false);
        let x = if track {
            g.tracked_input(t.clone())
        } else {
            g.constant(t.clone())
        };
        let probs = d1.forward(&mut g, &p, x)?;
        let (l, _) = bce_term(&mut g, probs, true)?;
        let grad = if track {
            g.backward(l)?.wrt(x).cloned()
        } else {
            None
        };
        Ok((g.value(l).item(), grad))
    };
    let grad = loss(&y_hat, true)?
        .1
        .unwrap_or_else(|| Tensor::zeros(y_hat.shape()));
    let idx: Vec<usize> = (0..y_hat.len()).step_by(5).collect();
    let numeric = central_difference(
        |t| loss(t, false).map_or(f64::NAN, |v| v.0),
        &y_hat,
        &idx,
        FD_STEP,
    );
    let analytic: Vec<f64> = idx.iter().map(|&i| grad.data()[i]).collect();
    Ok(plain_max_error(&analytic, &numeric))
}

type Forward<'a> = dyn Fn(&mut Graph, &ParamSet, Option<u32>, Var) -> Result<Var> + 'a;

/// Sampled-entry comparison of a network gradient with finite differences.
#[derive(Clone, Copy, Debug, Default)]
struct NetworkGradCheck {
    max_error: f64,
    checked: usize,
    /// Entries whose perturbation crosses a leaky-ReLU kink.
    kinked: usize,
}

impl NetworkGradCheck {
    /// At least half of the sampled entries must be kink-free.
    fn passed(&self) -> bool {
        self.max_error < GRAD_TOL && self.kinked <= self.checked
    }
}

/// Central differences that flag entries where the forward and backward
/// one-sided slopes disagree, which happens when `x ± h` lands on opposite
/// sides of a piecewise-linear kink.
fn kink_aware_difference(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    indices: &[usize],
    step: f64,
) -> Vec<Option<f64>> {
    let mut probe = x.clone();
    let centre = f(&probe);
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + step;
            let plus = f(&probe);
            probe.data_mut()[i] = orig - step;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            let (fwd, bwd) = ((plus - centre) / step, (centre - minus) / step);
            let smooth = relative_error(fwd, bwd, NET_GRAD_FLOOR) < KINK_SLOPE_GAP;
            smooth.then_some((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// Relative gap between one-sided slopes above which an entry counts as kinked.
const KINK_SLOPE_GAP: f64 = 1e-3;

fn tally(check: &mut NetworkGradCheck, analytic: &[f64], numeric: &[Option<f64>]) {
    for (&a, n) in analytic.iter().zip(numeric) {
        match n {
            Some(n) => {
                check.checked += 1;
                check.max_error = check.max_error.max(relative_error(a, *n, NET_GRAD_FLOOR));
            }
            None => check.kinked += 1,
        }
    }
}

/// Gradients of `Σ r ⊙ net(x)` for a fixed random `r`, w.r.t. sampled
/// parameter entries and input pixels, against central differences.
fn network_grad_error(
    params: &ParamSet,
    input: &Tensor,
    rng: &mut ChaCha8Rng,
    run: &Forward,
) -> Result<NetworkGradCheck> {
    const GROUP: u32 = 9;
    let probe = |params: &ParamSet, x: &Tensor| -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = run(&mut g, params, None, xv)?;
        Ok(g.value(y).data().to_vec())
    };
    let out_len = probe(params, input)?.len();
    let r: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dot =
        |v: Result<Vec<f64>>| v.map_or(f64::NAN, |v| v.iter().zip(&r).map(|(a, b)| a * b).sum());

    let mut g = Graph::new();
    let xv = g.tracked_input(input.clone());
    let y = run(&mut g, params, Some(GROUP), xv)?;
    let rt = Tensor::new(g.value(y).shape(), r.clone())?;
    let value = dot(Ok(g.value(y).data().to_vec()));
    let loss = g.scalar_fn(y, value, rt)?;
    let grads = g.backward(loss)?;
    let pg = g.param_grads(&grads, GROUP, params.len());
    let gx = grads
        .wrt(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(input.shape()));

    let mut check = NetworkGradCheck::default();
    for (ti, t) in params.tensors().iter().enumerate() {
        let idx: Vec<usize> = (0..3).map(|_| rng.gen_range(0..t.len())).collect();
        let numeric = kink_aware_difference(
            |probe_t| {
                let mut p = params.clone();
                p.tensors_mut()[ti] = probe_t.clone();
                dot(probe(&p, input))
            },
            t,
            &idx,
            FD_STEP,
        );
        let analytic: Vec<f64> = idx
            .iter()
            .map(|&i| pg[ti].as_ref().map_or(0.0, |g| g.data()[i]))
            .collect();
        tally(&mut check, &analytic, &numeric);
    }
    let idx: Vec<usize> = (0..24).map(|_| rng.gen_range(0..input.len())).collect();
    let numeric = kink_aware_difference(|x| dot(probe(params, x)), input, &idx, FD_STEP);
    let analytic: Vec<f64> = idx.iter().map(|&i| gx.data()[i]).collect();
    tally(&mut check, &analytic, &numeric);
    Ok(check)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let len = shape.iter().product();
    Ok(Tensor::new(
        shape,
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?)
}

fn generator_grad_error(rng: &mut ChaCha8Rng) -> Result<NetworkGradCheck> {
    let gen = Generator::new(GeneratorConfig::toy(32), 4)?;
    let x = random_tensor(&[1, 3, 32, 32], rng)?;
    // A zero head would hide every gradient behind it.
    let mut params = gen.params().clone();
    let names = params.names().to_vec();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if name.starts_with("head.") {
            *t = random_tensor(t.shape(), rng)?.map(|v| 0.3 * v);
        }
    }
    network_grad_error(&params, &x, rng, &|g, p, group, x| {
        let b = p.bind(g, group);
        gen.forward(g, &b, x)
    })
}

fn global_d_grad_error(rng: &mut ChaCha8Rng) -> Result<NetworkGradCheck> {
    let d1 = GlobalDiscriminator::new(DiscriminatorConfig::toy(32), 5)?;
    let x = random_tensor(&[2, 3, 32, 32], rng)?;
    network_grad_error(d1.params(), &x, rng, &|g, p, group, x| {
        let b = p.bind(g, group);
        d1.forward(g, &b, x)
    })
}

fn local_d_grad_error(rng: &mut ChaCha8Rng) -> Result<NetworkGradCheck> {
    let d2 = LocalDiscriminator::new(DiscriminatorConfig::toy(32), 6)?;
    let x = random_tensor(&[2, 3, 32, 32], rng)?;
    let masks = (0..3)
        .map(|_| random_tensor(&[2, 1, 32, 32], rng).map(|m| m.map(f64::abs)))
        .collect::<Result<Vec<_>>>()?;
    network_grad_error(d2.params(), &x, rng, &|g, p, group, x| {
        let b = p.bind(g, group);
        let mut views = Vec::with_capacity(3);
        for m in &masks {
            views.push(g.mul_mask(x, m.clone())?);
        }
        d2.forward(g, &b, [views[0], views[1], views[2]])
    })
}

/// Finite-difference checks of every loss gradient w.r.t. Ŷ and of full
/// backward passes through the 32×32 toy networks. Network entries whose
/// perturbation crosses a leaky-ReLU kink are excluded and counted.
pub fn gradient_checks(seed: u64) -> CheckReport {
    timed("gradient checks", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        type LossCase = fn(&mut ChaCha8Rng) -> Result<f64>;
        type NetCase = fn(&mut ChaCha8Rng) -> Result<NetworkGradCheck>;
        let losses: [(&str, LossCase); 4] = [
            ("pixel", pixel_grad_error),
            ("tv", tv_grad_error),
            ("identity", identity_grad_error),
            ("adversarial", adversarial_grad_error),
        ];
        let nets: [(&str, NetCase); 3] = [
            ("generator", generator_grad_error),
            ("global D", global_d_grad_error),
            ("local D", local_d_grad_error),
        ];
        let mut parts = Vec::new();
        let mut passed = true;
        let mut h = Sha256::new();
        for (name, case) in losses {
            let err = case(&mut rng)?;
            passed &= err < GRAD_TOL;
            h.update(err.to_le_bytes());
            parts.push(format!("{name} {err:.1e}"));
        }
        for (name, case) in nets {
            let c = case(&mut rng)?;
            passed &= c.passed();
            h.update(c.max_error.to_le_bytes());
            h.update((c.kinked as u64).to_le_bytes());
            parts.push(format!(
                "{name} {:.1e} ({} kinked of {})",
                c.max_error,
                c.kinked,
                c.checked + c.kinked
            ));
        }
        Ok((
            passed,
            format!("max rel err {}", parts.join(", ")),
            hex_digest(&h.finalize()),
        ))
    })
}

struct Instance {
    orig: EmbeddingSet,
    gen: EmbeddingSet,
    gallery: EmbeddingSet,
    bins: Vec<PoseBin>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let dim = rng.gen_range(2..6);
    let n_gallery = rng.gen_range(1..=10);
    let n_probes = rng.gen_range(1..=50);
    let mut ids: Vec<u32> = (0..40).collect();
    for i in 0..n_gallery {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let g_ids = ids[..n_gallery].to_vec();
    let row =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut g_rows: Vec<Vec<f64>> = (0..n_gallery).map(|_| row(rng)).collect();
    if n_gallery > 1 && rng.gen_bool(0.5) {
        g_rows[n_gallery - 1] = g_rows[0].clone();
    }
    let p_ids: Vec<u32> = (0..n_probes)
        .map(|_| g_ids[rng.gen_range(0..n_gallery)])
        .collect();
    let orig: Vec<f64> = (0..n_probes).flat_map(|_| row(rng)).collect();
    let gen: Vec<f64> = (0..n_probes).flat_map(|_| row(rng)).collect();
    let bins = (0..n_probes)
        .map(|_| {
            PoseBin::new(
                15.0 * rng.gen_range(0..7) as f64,
                15.0 * rng.gen_range(-2..=2) as f64,
            )
        })
        .collect();
    Ok(Instance {
        orig: EmbeddingSet::new(p_ids.clone(), dim, orig, Source::Original)?,
        gen: EmbeddingSet::new(p_ids, dim, gen, Source::Frontalized)?,
        gallery: EmbeddingSet::new(g_ids, dim, g_rows.concat(), Source::Original)?,
        bins,
    })
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn oracle(inst: &Instance) -> Vec<u32> {
    (0..inst.orig.len())
        .map(|p| {
            let mut best = (f64::INFINITY, u32::MAX);
            for g in 0..inst.gallery.len() {
                let d = 0.5
                    * (oracle_cos(inst.orig.row(p), inst.gallery.row(g))
                        + oracle_cos(inst.gen.row(p), inst.gallery.row(g)));
                let id = inst.gallery.ids()[g];
                if d < best.0 || (d == best.0 && id < best.1) {
                    best = (d, id);
                }
            }
            best.1
        })
        .collect()
}

/// Tie cases where several gallery rows are exactly equidistant.
fn tie_cases_hold() -> Result<bool> {
    let gallery = EmbeddingSet::new(
        vec![9, 4, 6],
        2,
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        Source::Original,
    )?;
    let bins = [PoseBin::new(30.0, 0.0)];
    let mut ok = true;
    for (probe, want) in [([2.0, 0.1], 6), ([1.0, 1.0], 4)] {
        let p = EmbeddingSet::new(vec![9], 2, probe.to_vec(), Source::Original)?;
        ok &= rank1(&p, &p, &gallery, &bins)?.outcomes[0].predicted == want;
    }
    Ok(ok)
}

/// Rank-1 predictions against the exhaustive double loop on 200 random
/// instances, plus the tie rule on constructed cases.
pub fn rank1_oracle(seed: u64) -> CheckReport {
    timed("rank-1 oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mismatched = 0;
        let mut probes = 0;
        let mut h = Sha256::new();
        for _ in 0..200 {
            let inst = random_instance(&mut rng)?;
            let got: Vec<u32> = rank1(&inst.orig, &inst.gen, &inst.gallery, &inst.bins)?
                .outcomes
                .iter()
                .map(|o| o.predicted)
                .collect();
            mismatched += usize::from(got != oracle(&inst));
            probes += got.len();
            for id in got {
                h.update(id.to_le_bytes());
            }
        }
        let ties = tie_cases_hold()?;
        Ok((
            mismatched == 0 && ties,
            format!(
                "200 instances, {probes} probes, {mismatched} mismatched; tie rule {}",
                if ties { "holds" } else { "violated" }
            ),
            hex_digest(&h.finalize()),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_protocol_and_oracles_pass() {
        let r = protocol_arithmetic(8, 5, 3);
        assert!(r.passed, "{}", r.line());
        assert_eq!(r.digest, protocol_arithmetic(8, 5, 3).digest);
        let r = loss_oracles(1);
        assert!(r.passed, "{}", r.line());
        let r = rank1_oracle(5);
        assert!(r.passed, "{}", r.line());
        assert!(r.line().starts_with("PASS rank-1 oracle: "));
    }
}
