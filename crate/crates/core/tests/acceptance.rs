//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use frontalize::dataset::{
    build_protocol, load_manifest, write_manifest, ManifestMode, ProtocolDir, M2FPA_TRAIN_SUBJECTS,
};
use frontalize::evaluator::{evaluate, manifest_hash, EvalOptions, Evaluation};
use frontalize::losses::{total_generator_loss, LossParts};
use frontalize::networks::Network;
use frontalize::toy::{
    generate_toy_dataset, protocol_manifest_records, toy_identity_extractor, ToySpec,
};
use frontalize::trainer::{
    fit, generate, read_trace, update_generator, update_global_d, update_local_d, FitReport,
    Models, Optimizers, StepTrace, TrainConfig, TrainData, Trainer,
};
use frontalize::verify::{self, FULL_SIZE_COUNTS, FULL_SIZE_SUBJECTS};
use frontalize::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(
        &mut self,
        n: u32,
        name: &str,
        limit_s: Option<f64>,
        f: impl FnOnce() -> Result<Outcome>,
    ) {
        let start = Instant::now();
        let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        self.record(n, name, limit_s, start.elapsed().as_secs_f64(), o);
    }

    fn record(&mut self, n: u32, name: &str, limit_s: Option<f64>, secs: f64, mut o: Outcome) {
        if let Some(limit) = limit_s {
            if secs >= limit {
                o.passed = false;
                o.detail.push_str(&format!("; over the {limit:.0} s limit"));
            }
        }
        self.failures += usize::from(!o.passed);
        println!(
            "{} criterion {n} {name} ({secs:.2} s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
}

/// Full-size strict manifest on disk, loaded back and split. Returns the
/// counts and a digest of the three record lists.
fn full_size_protocol(dir: &Path) -> Result<((usize, usize, usize), String)> {
    let path = dir.join("full-size.jsonl");
    write_manifest(&path, &protocol_manifest_records(FULL_SIZE_SUBJECTS))?;
    let records = load_manifest(&path, ManifestMode::Strict)?;
    let split = build_protocol(&records, M2FPA_TRAIN_SUBJECTS, 0)?;
    let digest = [&split.train, &split.probes, &split.gallery]
        .map(|part| manifest_hash(part))
        .join(":");
    Ok((
        (split.train.len(), split.probes.len(), split.gallery.len()),
        digest,
    ))
}

/// Everything the smoke run produces.
struct Smoke {
    config: TrainConfig,
    protocol: ProtocolDir,
    data: TrainData,
    trainer: Trainer,
    report: FitReport,
    traces: Vec<StepTrace>,
    evaluation: Evaluation,
    manifest: Vec<u8>,
    seconds: f64,
}

const SMOKE_STEPS: u64 = 500;

fn smoke_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_steps: Some(SMOKE_STEPS),
        ..TrainConfig::toy(32)
    }
}

/// Toy corpus, protocol (48 train subjects, seed 1), 500 generator steps,
/// then rank-1 of the held-out probes.
fn smoke(root: &Path) -> Result<Smoke> {
    let start = Instant::now();
    let corpus = generate_toy_dataset(&ToySpec::smoke(), &root.join("data"))?;
    let split = build_protocol(&corpus.records, 48, 1)?;
    let protocol = ProtocolDir::new(split, 1, root.join("data"));
    let config = smoke_config();
    let data = TrainData::from_protocol(&protocol, config.image_size, config.align)?;
    let (trainer, report) = fit(config.clone(), &data, &root.join("ckpt"))?;
    let seconds = start.elapsed().as_secs_f64();
    let traces = read_trace(&report.trace)?;
    let extractor = toy_identity_extractor(config.extractor_seed);
    let evaluation = evaluate(
        &trainer.models.generator,
        "smoke",
        &extractor,
        &protocol,
        &EvalOptions::default(),
    )?;
    let manifest =
        std::fs::read(&corpus.manifest).map_err(|e| frontalize::Error::io(&corpus.manifest, e))?;
    Ok(Smoke {
        config,
        protocol,
        data,
        trainer,
        report,
        traces,
        evaluation,
        manifest,
        seconds,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn criterion_4(s: &Smoke) -> Result<Outcome> {
    let mut exact = 0;
    for t in &s.traces {
        let l = &t.losses;
        let parts = LossParts {
            pixel: l.l_pixel,
            adv1: l.l_adv1,
            adv2: l.l_adv2,
            id: l.l_id,
            tv: l.l_tv,
        };
        exact += usize::from(
            total_generator_loss(&parts, &s.config.weights)?
                .total
                .to_bits()
                == l.total.to_bits(),
        );
    }
    Ok(outcome(
        exact == s.traces.len() && !s.traces.is_empty(),
        format!("{exact} of {} logged totals bit-identical", s.traces.len()),
    ))
}

fn criterion_5(s: &Smoke) -> Result<Outcome> {
    let cfg = &s.config;
    let mut models = Models::init(cfg)?;
    let mut opt = Optimizers::new(&models, cfg);
    let order = s.data.epoch_order(cfg.seed, 0, cfg.batch_size);
    let (mut g_kept, mut d_kept, mut all_moved) = (0, 0, true);
    for step in 1..=50u64 {
        let batch = s.data.batch(&order[(step as usize - 1) % order.len()])?;
        let g0 = models.generator.params().clone();
        let (d1_0, d2_0) = (
            models.global_d.params().clone(),
            models.local_d.params().clone(),
        );
        let pass = generate(&models, &batch)?;
        let y_hat = pass.output().clone();
        update_global_d(
            &mut models,
            &mut opt.global_d,
            &batch,
            &y_hat,
            cfg.lr0,
            step,
        )?;
        update_local_d(&mut models, &mut opt.local_d, &batch, &y_hat, cfg.lr0, step)?;
        g_kept += usize::from(models.generator.params().bit_eq(&g0));
        let (d1, d2) = (
            models.global_d.params().clone(),
            models.local_d.params().clone(),
        );
        update_generator(
            &mut models,
            &mut opt.generator,
            pass,
            &batch,
            cfg,
            cfg.lr0,
            step,
        )?;
        d_kept += usize::from(
            models.global_d.params().bit_eq(&d1) && models.local_d.params().bit_eq(&d2),
        );
        all_moved &=
            !models.generator.params().bit_eq(&g0) && !d1.bit_eq(&d1_0) && !d2.bit_eq(&d2_0);
    }
    let frozen = Models::init(cfg)?
        .extractor
        .params()
        .bit_eq(s.trainer.models.extractor.params());
    Ok(outcome(
        g_kept == 50 && d_kept == 50 && all_moved && frozen,
        format!(
            "G unchanged by D updates {g_kept}/50, D1+D2 unchanged by G updates {d_kept}/50, \
             every update moved its own side: {all_moved}; extractor frozen over {} steps: {frozen}",
            s.report.total_steps
        ),
    ))
}

fn criterion_7(s: &Smoke) -> Outcome {
    let t = &s.traces;
    if t.len() != SMOKE_STEPS as usize {
        return outcome(
            false,
            format!("{} steps logged, expected {SMOKE_STEPS}", t.len()),
        );
    }
    let first = mean(t[..10].iter().map(|x| x.losses.l_pixel));
    let last = mean(t[t.len() - 10..].iter().map(|x| x.losses.l_pixel));
    let drop = 1.0 - last / first;
    let finite = t.iter().all(|x| {
        [
            x.losses.total,
            x.d1_loss,
            x.d2_loss,
            x.d1_real,
            x.d1_fake,
            x.d2_real,
            x.d2_fake,
        ]
        .iter()
        .all(|v| v.is_finite())
    });
    let tail = &t[t.len() - 50..];
    let outputs = || {
        tail.iter()
            .flat_map(|x| [x.d1_real, x.d1_fake, x.d2_real, x.d2_fake])
    };
    let lo = outputs().fold(f64::INFINITY, f64::min);
    let hi = outputs().fold(f64::NEG_INFINITY, f64::max);
    let in_range = lo > 0.05 && hi < 0.95;
    outcome(
        drop >= 0.5 && finite && in_range,
        format!(
            "{} pairs, {} steps; l_pixel {first:.4} -> {last:.4} ({:.1}% drop); all losses finite: {finite}; \
             final-50 D outputs in [{lo:.3}, {hi:.3}]",
            s.data.len(),
            t.len(),
            100.0 * drop
        ),
    )
}

fn criterion_8(s: &Smoke) -> Outcome {
    let orig = s.evaluation.original.overall();
    let fused = s.evaluation.fused.overall();
    let (o, f) = (
        orig.accuracy().unwrap_or(0.0),
        fused.accuracy().unwrap_or(0.0),
    );
    outcome(
        orig.total > 0 && f >= o - 2.0,
        format!(
            "{} probes of {} test subjects; fused {f:.1}% vs original {o:.1}%",
            orig.total,
            s.protocol.split.test_subjects.len()
        ),
    )
}

fn checkpoint_bytes(r: &FitReport) -> Result<Vec<u8>> {
    let last: &PathBuf = r
        .checkpoints
        .last()
        .ok_or_else(|| frontalize::Error::Trainer("no checkpoint".into()))?;
    std::fs::read(last).map_err(|e| frontalize::Error::io(last, e))
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let root = scratch.path();
    let mut suite = Suite { failures: 0 };

    let mut protocol_run = None;
    suite.run(1, "protocol arithmetic", Some(30.0), || {
        let (counts, digest) = full_size_protocol(root)?;
        protocol_run = Some(digest);
        Ok(outcome(
            counts == FULL_SIZE_COUNTS,
            format!(
                "train {} / probes {} / gallery {}",
                counts.0, counts.1, counts.2
            ),
        ))
    });

    type Check = fn(u64) -> verify::CheckReport;
    let checks: [(u32, &str, f64, Check, u64); 2] = [
        (2, "loss oracles", 10.0, verify::loss_oracles, 11),
        (3, "gradient checks", 120.0, verify::gradient_checks, 21),
    ];
    for (n, name, limit, check, seed) in checks {
        suite.run(n, name, Some(limit), || {
            let r = check(seed);
            Ok(outcome(r.passed, r.detail))
        });
    }

    eprintln!("running smoke training ({SMOKE_STEPS} steps)...");
    let smoke_a = smoke(&root.join("smoke-a"));
    let with_smoke =
        |suite: &mut Suite, n: u32, name: &str, f: &dyn Fn(&Smoke) -> Result<Outcome>| {
            suite.run(n, name, None, || match &smoke_a {
                Ok(s) => f(s),
                Err(e) => Ok(outcome(false, format!("smoke run failed: {e}"))),
            })
        };
    with_smoke(&mut suite, 4, "trace exactness", &criterion_4);
    with_smoke(&mut suite, 5, "alternation contract", &criterion_5);

    let mut rank_digest = None;
    suite.run(6, "rank-1 oracle", Some(30.0), || {
        let r = verify::rank1_oracle(2024);
        rank_digest = Some(r.digest.clone());
        Ok(outcome(r.passed, r.detail))
    });

    // Timed from corpus generation to the last training step.
    match &smoke_a {
        Ok(s) => suite.record(7, "smoke training", Some(900.0), s.seconds, criterion_7(s)),
        Err(e) => suite.record(
            7,
            "smoke training",
            None,
            0.0,
            outcome(false, format!("smoke run failed: {e}")),
        ),
    }
    with_smoke(&mut suite, 8, "recognition via generation", &|s| {
        Ok(criterion_8(s))
    });

    suite.run(9, "determinism", None, || {
        let (counts, digest) = full_size_protocol(&mkdir(root.join("again"))?)?;
        let protocol_same = Some(digest) == protocol_run && counts == FULL_SIZE_COUNTS;
        let rank_same = Some(verify::rank1_oracle(2024).digest) == rank_digest;
        let a = smoke_a.as_ref().map_err(|e| frontalize::Error::Trainer(format!("smoke run failed: {e}")))?;
        let b = smoke(&root.join("smoke-b"))?;
        let strip = |t: &[StepTrace]| t.iter().map(StepTrace::without_timing).collect::<Vec<_>>();
        let smoke_same = a.manifest == b.manifest
            && strip(&a.traces) == strip(&b.traces)
            && checkpoint_bytes(&a.report)? == checkpoint_bytes(&b.report)?
            && a.evaluation.report.to_csv() == b.evaluation.report.to_csv();
        Ok(outcome(
            protocol_same && rank_same && smoke_same,
            format!(
                "protocol split identical: {protocol_same}; rank-1 predictions identical: {rank_same}; \
                 smoke manifest, traces, checkpoint and report identical: {smoke_same}"
            ),
        ))
    });

    println!("{} of 9 criteria passed", 9 - suite.failures);
    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn mkdir(p: PathBuf) -> Result<PathBuf> {
    std::fs::create_dir_all(&p).map_err(|e| frontalize::Error::io(&p, e))?;
    Ok(p)
}
