//! Subject-disjoint train/test split with a frontal gallery and posed probes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{load_manifest, write_manifest, ManifestMode};
use super::record::ImageRecord;
use crate::{Error, Result};

/// Number of training subjects in the M2FPA protocol.
pub const M2FPA_TRAIN_SUBJECTS: usize = 162;

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSplit {
    pub train: Vec<ImageRecord>,
    /// Exactly one frontal/neutral/above record per test subject.
    pub gallery: Vec<ImageRecord>,
    pub probes: Vec<ImageRecord>,
    pub train_subjects: Vec<u32>,
    pub test_subjects: Vec<u32>,
}

/// Seeded Fisher–Yates over a slice.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

pub fn build_protocol(
    records: &[ImageRecord],
    train_subject_count: usize,
    seed: u64,
) -> Result<ProtocolSplit> {
    let mut subjects: Vec<u32> = records
        .iter()
        .map(|r| r.subject_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < train_subject_count + 1 {
        return Err(Error::Protocol(format!(
            "need at least {} subjects for {} training subjects, found {}",
            train_subject_count + 1,
            train_subject_count,
            subjects.len()
        )));
    }
    seeded_shuffle(&mut subjects, seed);
    let mut train_subjects = subjects[..train_subject_count].to_vec();
    let mut test_subjects = subjects[train_subject_count..].to_vec();
    train_subjects.sort_unstable();
    test_subjects.sort_unstable();
    let train_set: HashSet<u32> = train_subjects.iter().copied().collect();

    let mut train = Vec::new();
    let mut probes = Vec::new();
    let mut gallery_by_subject: BTreeMap<u32, ImageRecord> = BTreeMap::new();
    for r in records {
        if train_set.contains(&r.subject_id) {
            train.push(r.clone());
        } else if r.is_frontal() {
            if r.is_gallery_condition() {
                gallery_by_subject
                    .entry(r.subject_id)
                    .or_insert_with(|| r.clone());
            }
        } else {
            probes.push(r.clone());
        }
    }
    let missing: Vec<u32> = test_subjects
        .iter()
        .copied()
        .filter(|s| !gallery_by_subject.contains_key(s))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Protocol(format!(
            "test subject(s) {} lack a frontal/neutral/above gallery record",
            missing
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(ProtocolSplit {
        train,
        gallery: gallery_by_subject.into_values().collect(),
        probes,
        train_subjects,
        test_subjects,
    })
}

/// `protocol.json` in a protocol directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMeta {
    pub seed: u64,
    pub train_subject_count: usize,
    /// Directory that relative `image_ref`s resolve against.
    pub image_root: PathBuf,
    pub train_subjects: Vec<u32>,
    pub test_subjects: Vec<u32>,
    pub train_images: usize,
    pub probe_images: usize,
    pub gallery_images: usize,
}

/// A split together with where its images live.
#[derive(Clone, Debug)]
pub struct ProtocolDir {
    pub meta: ProtocolMeta,
    pub split: ProtocolSplit,
}

impl ProtocolDir {
    pub const META: &'static str = "protocol.json";
    pub const TRAIN: &'static str = "train.jsonl";
    pub const GALLERY: &'static str = "gallery.jsonl";
    pub const PROBES: &'static str = "probes.jsonl";

    pub fn new(split: ProtocolSplit, seed: u64, image_root: PathBuf) -> Self {
        let meta = ProtocolMeta {
            seed,
            train_subject_count: split.train_subjects.len(),
            image_root,
            train_subjects: split.train_subjects.clone(),
            test_subjects: split.test_subjects.clone(),
            train_images: split.train.len(),
            probe_images: split.probes.len(),
            gallery_images: split.gallery.len(),
        };
        Self { meta, split }
    }

    /// Writes the four protocol files and returns their paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join(Self::META);
        let json = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
        let mut paths = vec![meta_path];
        for (name, rows) in [
            (Self::TRAIN, &self.split.train),
            (Self::GALLERY, &self.split.gallery),
            (Self::PROBES, &self.split.probes),
        ] {
            let p = dir.join(name);
            write_manifest(&p, rows)?;
            paths.push(p);
        }
        Ok(paths)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(Self::META);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ProtocolMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("{}: {e}", meta_path.display())))?;
        let split = ProtocolSplit {
            train: load_manifest(&dir.join(Self::TRAIN), ManifestMode::Lax)?,
            gallery: load_manifest(&dir.join(Self::GALLERY), ManifestMode::Lax)?,
            probes: load_manifest(&dir.join(Self::PROBES), ManifestMode::Lax)?,
            train_subjects: meta.train_subjects.clone(),
            test_subjects: meta.test_subjects.clone(),
        };
        Ok(Self { meta, split })
    }

    pub fn resolve(&self, image_ref: &str) -> PathBuf {
        resolve_ref(&self.meta.image_root, image_ref)
    }
}

/// Relative references resolve against `root`; absolute ones are kept.
pub fn resolve_ref(root: &Path, image_ref: &str) -> PathBuf {
    let p = Path::new(image_ref);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}
