//! `frontalize`: toy data generation, protocol splits, training, synthesis,
//! rank-1 evaluation and self-checks.
//!
//! Artifact paths go to stdout, one per line. Counts and progress go to
//! stderr. Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frontalize::dataset::{
    build_protocol, load_manifest, ManifestMode, ProtocolDir, M2FPA_TRAIN_SUBJECTS,
};
use frontalize::evaluator::{evaluate, extractor_from_id, synthesize, EvalOptions};
use frontalize::networks::Checkpoint;
use frontalize::toy::{generate_toy_dataset, ToySpec};
use frontalize::trainer::{fit, load_generator, ModelPreset, TrainConfig, TrainData};
use frontalize::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "frontalize", version, about = "Face frontalization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus and its strict manifest.
    Toygen {
        /// JSON toy spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe/gallery protocol commands.
    Protocol {
        #[command(subcommand)]
        command: ProtocolCommand,
    },
    /// Train the generator and both discriminators, resuming from the
    /// checkpoint directory when it already holds a run.
    Train(TrainArgs),
    /// Write `input | output | target` strips for every non-frontal record.
    Synthesize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory relative image references resolve against [default:
        /// the protocol's image root for protocol files, else the
        /// manifest's directory].
        #[arg(long)]
        image_root: Option<PathBuf>,
        /// Align images onto the landmark template first.
        #[arg(long)]
        align: bool,
    },
    /// Recognition evaluation.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Run the built-in oracle, gradient and protocol checks.
    Verify,
}

#[derive(Subcommand)]
enum ProtocolCommand {
    /// Split a manifest into train images, gallery and probes.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = M2FPA_TRAIN_SUBJECTS)]
        train_subjects: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Accept poses outside the taxonomy.
        #[arg(long)]
        lax: bool,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Rank-1 identification of original and fused probes, binned by pose.
    Rank1 {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        /// `toy-conv-<seed>` or `pixels`.
        #[arg(long)]
        extractor: String,
        /// CSV report path; a text rendering is written beside it.
        #[arg(long)]
        report: PathBuf,
        /// Directory for cached embeddings.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        align: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    protocol: PathBuf,
    /// JSON file with `TrainConfig` fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    image_size: Option<usize>,
    /// `standard` or `toy`.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<ModelPreset>,
}

fn parse_preset(s: &str) -> std::result::Result<ModelPreset, String> {
    match s {
        "standard" => Ok(ModelPreset::Standard),
        "toy" => Ok(ModelPreset::Toy),
        _ => Err(format!(
            "unknown preset `{s}` (expected `standard` or `toy`)"
        )),
    }
}

/// `1234567` as `1,234,567`.
fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

fn parent_dir(p: &Path) -> Result<PathBuf> {
    absolute(
        p.parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new(".")),
    )
}

/// Protocol files resolve against the protocol's image root; any other
/// manifest against its own directory.
fn default_image_root(manifest: &Path) -> Result<PathBuf> {
    let dir = parent_dir(manifest)?;
    if dir.join(ProtocolDir::META).exists() {
        Ok(ProtocolDir::load(&dir)?.meta.image_root)
    } else {
        Ok(dir)
    }
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.max_steps {
        cfg.max_steps = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lr0 {
        cfg.lr0 = v;
    }
    if let Some(v) = args.image_size {
        cfg.image_size = v;
    }
    if let Some(v) = args.preset {
        cfg.preset = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Toygen { spec, out } => {
            let spec = ToySpec::load(&spec)?;
            let corpus = generate_toy_dataset(&spec, &out)?;
            let images: Vec<PathBuf> = corpus
                .records
                .iter()
                .map(|r| out.join(&r.image_ref))
                .collect();
            print_paths(&images);
            println!("{}", corpus.manifest.display());
            eprintln!(
                "{} images of {} identities",
                thousands(corpus.records.len()),
                thousands(spec.n_identities as usize)
            );
        }
        Command::Protocol {
            command:
                ProtocolCommand::Build {
                    manifest,
                    train_subjects,
                    seed,
                    out,
                    lax,
                },
        } => {
            let mode = if lax {
                ManifestMode::Lax
            } else {
                ManifestMode::Strict
            };
            let records = load_manifest(&manifest, mode)?;
            let split = build_protocol(&records, train_subjects, seed)?;
            let dir = ProtocolDir::new(split, seed, parent_dir(&manifest)?);
            print_paths(&dir.save(&out)?);
            let m = &dir.meta;
            eprintln!(
                "train {} / probes {} / gallery {}",
                thousands(m.train_images),
                thousands(m.probe_images),
                thousands(m.gallery_images)
            );
        }
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let protocol = ProtocolDir::load(&args.protocol)?;
            let data = TrainData::from_protocol(&protocol, cfg.image_size, cfg.align)?;
            eprintln!("{} training pairs", thousands(data.len()));
            let (_, report) = fit(cfg, &data, &args.checkpoints)?;
            if let Some(p) = &report.resumed_from {
                eprintln!("resumed from {}", p.display());
            }
            print_paths(&report.checkpoints);
            println!("{}", report.trace.display());
            eprintln!(
                "{} steps run, {} total, {} epochs complete",
                thousands(report.steps_run as usize),
                thousands(report.total_steps as usize),
                report.epochs_completed
            );
        }
        Command::Synthesize {
            checkpoint,
            manifest,
            out,
            image_root,
            align,
        } => {
            let (generator, _) = load_generator(&checkpoint)?;
            let records = load_manifest(&manifest, ManifestMode::Lax)?;
            let root = match image_root {
                Some(r) => r,
                None => default_image_root(&manifest)?,
            };
            let opts = EvalOptions {
                align,
                ..EvalOptions::default()
            };
            let written = synthesize(&generator, &root, &records, &out, &opts)?;
            print_paths(&written);
            eprintln!("{} strips", thousands(written.len()));
        }
        Command::Eval {
            command:
                EvalCommand::Rank1 {
                    checkpoint,
                    protocol,
                    extractor,
                    report,
                    cache,
                    batch_size,
                    align,
                },
        } => {
            let extractor = extractor_from_id(&extractor)?;
            let protocol = ProtocolDir::load(&protocol)?;
            let (generator, _) = load_generator(&checkpoint)?;
            let checkpoint_id = Checkpoint::load(&checkpoint)?.content_id()?;
            let opts = EvalOptions {
                batch_size,
                align,
                cache_dir: cache,
            };
            let eval = evaluate(
                &generator,
                &checkpoint_id,
                extractor.as_ref(),
                &protocol,
                &opts,
            )?;
            if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::write(&report, eval.report.to_csv()).map_err(|e| Error::io(&report, e))?;
            let text_path = report.with_extension("txt");
            let text = eval.report.to_text();
            fs::write(&text_path, &text).map_err(|e| Error::io(&text_path, e))?;
            print_paths(&[report, text_path]);
            eprint!("{text}");
        }
        Command::Verify => {
            let reports = verify::run_all();
            for r in &reports {
                println!("{}", r.line());
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::Verify(format!("{failed} self-check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
