use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frontalize::dataset::write_manifest;
use frontalize::toy::protocol_manifest_records;

fn frontalize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontalize"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_paths(out: &Output) -> Vec<PathBuf> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(PathBuf::from)
        .collect()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> Output {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SPEC: &str = r#"{
  "n_identities": 5,
  "poses": [[0, 0], [30, 0], [-45, 0], [0, 15]],
  "attributes": ["neutral"],
  "illuminations": ["above"],
  "size": 32,
  "seed": 3
}"#;

const CONFIG: &str =
    r#"{ "preset": "toy", "image_size": 32, "batch_size": 2, "epochs": 3, "seed": 4 }"#;

/// toygen, protocol build and one training epoch in `root`.
fn pipeline(root: &Path) -> (PathBuf, PathBuf) {
    fs::write(root.join("spec.json"), SPEC).unwrap();
    fs::write(root.join("config.json"), CONFIG).unwrap();
    let data = root.join("data");
    let out = ok(frontalize(&[
        "toygen",
        "--spec",
        s(&root.join("spec.json")),
        "--out",
        s(&data),
    ]));
    let paths = stdout_paths(&out);
    assert_eq!(paths.len(), 5 * 4 + 1);
    assert!(paths.iter().all(|p| p.exists()));
    let manifest = paths.last().unwrap().clone();

    let protocol = root.join("protocol");
    let out = ok(frontalize(&[
        "protocol",
        "build",
        "--manifest",
        s(&manifest),
        "--train-subjects",
        "3",
        "--seed",
        "2",
        "--out",
        s(&protocol),
    ]));
    assert_eq!(stdout_paths(&out).len(), 4);
    assert!(
        stderr(&out).contains("train 12 / probes 6 / gallery 2"),
        "{}",
        stderr(&out)
    );

    let ckpts = root.join("ckpt");
    let out = ok(frontalize(&[
        "train",
        "--protocol",
        s(&protocol),
        "--config",
        s(&root.join("config.json")),
        "--checkpoints",
        s(&ckpts),
        "--epochs",
        "1",
    ]));
    let paths = stdout_paths(&out);
    assert!(paths.iter().all(|p| p.exists()));
    let checkpoint = paths
        .iter()
        .find(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .unwrap()
        .clone();
    assert_eq!(checkpoint.file_name().unwrap(), "epoch-0001.ckpt");
    (protocol, checkpoint)
}

#[test]
fn toy_pipeline_end_to_end_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let (protocol, checkpoint) = pipeline(a.path());

    let strips = a.path().join("strips");
    let out = ok(frontalize(&[
        "synthesize",
        "--checkpoint",
        s(&checkpoint),
        "--manifest",
        s(&protocol.join("probes.jsonl")),
        "--out",
        s(&strips),
    ]));
    let written = stdout_paths(&out);
    assert_eq!(written.len(), 6);
    assert!(written.iter().all(|p| p.exists()));

    let report = a.path().join("report").join("rank1.csv");
    let args = [
        "eval",
        "rank1",
        "--checkpoint",
        s(&checkpoint),
        "--protocol",
        s(&protocol),
        "--extractor",
        "toy-conv-11",
        "--report",
        s(&report),
    ];
    let out = ok(frontalize(&args));
    assert_eq!(
        stdout_paths(&out),
        vec![report.clone(), report.with_extension("txt")]
    );
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.contains("method,correct,total,rank1\n"), "{csv}");
    assert!(csv.contains("\nfused,"));
    ok(frontalize(&args));
    assert_eq!(fs::read_to_string(&report).unwrap(), csv);

    // A second run from scratch reproduces the checkpoint byte for byte.
    let b = tempfile::tempdir().unwrap();
    let (_, checkpoint_b) = pipeline(b.path());
    assert_eq!(
        fs::read(&checkpoint).unwrap(),
        fs::read(&checkpoint_b).unwrap()
    );
}

#[test]
fn missing_gallery_subject_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (protocol, checkpoint) = pipeline(dir.path());
    let gallery = protocol.join("gallery.jsonl");
    let text = fs::read_to_string(&gallery).unwrap();
    let first = text.lines().next().unwrap();
    let subject = serde_json::from_str::<serde_json::Value>(first).unwrap()["subject_id"]
        .as_u64()
        .unwrap();
    fs::write(
        &gallery,
        text.lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect::<String>(),
    )
    .unwrap();
    let out = frontalize(&[
        "eval",
        "rank1",
        "--checkpoint",
        s(&checkpoint),
        "--protocol",
        s(&protocol),
        "--extractor",
        "pixels",
        "--report",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("evaluator:") && err.contains(&subject.to_string()),
        "{err}"
    );
}

#[test]
fn full_size_protocol_prints_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.jsonl");
    write_manifest(&manifest, &protocol_manifest_records(229)).unwrap();
    let out = ok(frontalize(&[
        "protocol",
        "build",
        "--manifest",
        s(&manifest),
        "--out",
        s(&dir.path().join("p")),
    ]));
    assert!(
        stderr(&out).contains("train 258,552 / probes 105,056 / gallery 67"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn usage_and_validation_exit_codes() {
    let out = frontalize(&["protocol", "build", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert_eq!(frontalize(&[]).status.code(), Some(1));
    assert_eq!(frontalize(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.jsonl");
    fs::write(&manifest, "{\"image_ref\": 3}\n").unwrap();
    let out = frontalize(&[
        "protocol",
        "build",
        "--manifest",
        s(&manifest),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).starts_with("error: manifest: line 1"),
        "{}",
        stderr(&out)
    );

    let out = frontalize(&[
        "eval",
        "rank1",
        "--checkpoint",
        "x",
        "--protocol",
        "y",
        "--extractor",
        "nope",
        "--report",
        "r.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("config: unknown extractor"));

    let out = frontalize(&[
        "synthesize",
        "--checkpoint",
        s(&dir.path().join("missing.ckpt")),
        "--manifest",
        s(&manifest),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error: io: "), "{}", stderr(&out));

    let out = frontalize(&[
        "train",
        "--protocol",
        "nowhere",
        "--checkpoints",
        "c",
        "--batch-size",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("config: batch_size"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn verify_passes() {
    let out = ok(frontalize(&["verify"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}
