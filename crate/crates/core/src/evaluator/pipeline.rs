use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use frontalize_tensor::Tensor;

use super::cache::{cache_key, load_embeddings, manifest_hash, save_embeddings};
use super::rank::{rank1, EmbeddingSet, RankedResult, Source};
use super::report::{pose_binned_report, Report};
use crate::dataset::{pose_bin, ImageRecord, ProtocolDir};
use crate::image::Image;
use crate::networks::{ConvExtractor, Generator, IdentityExtractor, PixelExtractor};
use crate::trainer::load_face;
use crate::{Error, Result};

/// Builds an extractor from its id: `toy-conv-<seed>` or `pixels`.
pub fn extractor_from_id(id: &str) -> Result<Box<dyn IdentityExtractor>> {
    if id == "pixels" {
        return Ok(Box::new(PixelExtractor { channels: 3 }));
    }
    if let Some(seed) = id
        .strip_prefix("toy-conv-")
        .and_then(|s| s.parse::<u64>().ok())
    {
        return Ok(Box::new(ConvExtractor::new(seed, 3)));
    }
    Err(Error::Config(format!(
        "unknown extractor `{id}` (expected `toy-conv-<seed>` or `pixels`)"
    )))
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub align: bool,
    /// Directory for embedding sidecars; nothing is cached when `None`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            align: false,
            cache_dir: None,
        }
    }
}

pub struct Evaluation {
    /// Plain cosine rank-1 of the unprocessed probes.
    pub original: RankedResult,
    /// Fused-distance rank-1 of each probe and its frontalized version.
    pub fused: RankedResult,
    pub report: Report,
}

/// Feeds `records` through `f` in batches of loaded, size-checked images.
fn for_batches(
    root: &Path,
    records: &[ImageRecord],
    size: usize,
    opts: &EvalOptions,
    mut f: impl FnMut(&Tensor) -> Result<()>,
) -> Result<()> {
    for chunk in records.chunks(opts.batch_size.max(1)) {
        let images = chunk
            .iter()
            .map(|r| load_face(root, r, size, opts.align).map(|(im, _)| im))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Image> = images.iter().collect();
        f(&Image::batch(&refs)?)?;
    }
    Ok(())
}

fn embedding_set(
    ids: Vec<u32>,
    dim: usize,
    data: Vec<f64>,
    source: Source,
) -> Result<EmbeddingSet> {
    EmbeddingSet::new(ids, dim, data, source)
}

fn cached(
    opts: &EvalOptions,
    key: String,
    compute: impl FnOnce() -> Result<EmbeddingSet>,
) -> Result<EmbeddingSet> {
    let Some(dir) = &opts.cache_dir else {
        return compute();
    };
    let path = dir.join(format!("{}.emb", &key[..16]));
    if let Some(set) = load_embeddings(&path, &key) {
        return Ok(set);
    }
    let set = compute()?;
    save_embeddings(&path, &key, &set)?;
    Ok(set)
}

/// Embeds the original images of `records`, and their frontalized versions
/// when `generator` is given.
fn embed_records(
    root: &Path,
    records: &[ImageRecord],
    size: usize,
    extractor: &dyn IdentityExtractor,
    generator: Option<&Generator>,
    opts: &EvalOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut orig, mut gen) = (Vec::new(), Vec::new());
    for_batches(root, records, size, opts, |x| {
        orig.extend_from_slice(extractor.embed(x)?.data());
        if let Some(g) = generator {
            gen.extend_from_slice(extractor.embed(&g.infer(x)?)?.data());
        }
        Ok(())
    })?;
    Ok((orig, gen))
}

/// Ranks every protocol probe against the gallery twice: by the original
/// image alone, and by the fused distance with its frontalized version.
/// Fails before embedding anything if a probe subject has no gallery image.
pub fn evaluate(
    generator: &Generator,
    checkpoint_id: &str,
    extractor: &dyn IdentityExtractor,
    protocol: &ProtocolDir,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let split = &protocol.split;
    if split.probes.is_empty() {
        return Err(Error::Eval("protocol has no probes".into()));
    }
    let enrolled: HashSet<u32> = split.gallery.iter().map(|r| r.subject_id).collect();
    let missing: BTreeSet<u32> = split
        .probes
        .iter()
        .map(|r| r.subject_id)
        .filter(|s| !enrolled.contains(s))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGallery(missing.into_iter().collect()));
    }
    let root = &protocol.meta.image_root;
    let size = generator.config().size;
    let dim = extractor.embedding_dim();
    let xid = extractor.id();

    let g_ids: Vec<u32> = split.gallery.iter().map(|r| r.subject_id).collect();
    let gallery = cached(
        opts,
        cache_key("", &manifest_hash(&split.gallery), &xid, Source::Original),
        || {
            let (e, _) = embed_records(root, &split.gallery, size, extractor, None, opts)?;
            embedding_set(g_ids.clone(), dim, e, Source::Original)
        },
    )?;

    let p_ids: Vec<u32> = split.probes.iter().map(|r| r.subject_id).collect();
    let probes_hash = manifest_hash(&split.probes);
    let orig_key = cache_key("", &probes_hash, &xid, Source::Original);
    let gen_key = cache_key(checkpoint_id, &probes_hash, &xid, Source::Frontalized);
    let mut fresh: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut compute_both = || -> Result<(Vec<f64>, Vec<f64>)> {
        if fresh.is_none() {
            fresh = Some(embed_records(
                root,
                &split.probes,
                size,
                extractor,
                Some(generator),
                opts,
            )?);
        }
        Ok(fresh.clone().expect("just computed"))
    };
    let probe_orig = cached(opts, orig_key, || {
        embedding_set(p_ids.clone(), dim, compute_both()?.0, Source::Original)
    })?;
    let probe_gen = cached(opts, gen_key, || {
        embedding_set(p_ids.clone(), dim, compute_both()?.1, Source::Frontalized)
    })?;

    let bins: Vec<_> = split.probes.iter().map(pose_bin).collect();
    let original = rank1(&probe_orig, &probe_orig, &gallery, &bins)?;
    let fused = rank1(&probe_orig, &probe_gen, &gallery, &bins)?;
    let report = pose_binned_report(&[("original", &original), ("fused", &fused)]);
    Ok(Evaluation {
        original,
        fused,
        report,
    })
}

/// Writes `X | Ŷ | Y` strips for every non-frontal record of `records`, `Y`
/// being the frontal record of the same subject, attribute and illumination
/// when the manifest has one. Returns the written paths.
pub fn synthesize(
    generator: &Generator,
    root: &Path,
    records: &[ImageRecord],
    out: &Path,
    opts: &EvalOptions,
) -> Result<Vec<PathBuf>> {
    let size = generator.config().size;
    let mut frontal = HashMap::new();
    for r in records.iter().filter(|r| r.is_frontal()) {
        frontal
            .entry((r.subject_id, r.attribute, r.illumination))
            .or_insert(r);
    }
    let profiles: Vec<ImageRecord> = records
        .iter()
        .filter(|r| !r.is_frontal())
        .cloned()
        .collect();
    let mut written = Vec::new();
    let mut next = 0;
    for_batches(root, &profiles, size, opts, |x| {
        let y_hat = generator.infer(x)?;
        for n in 0..x.shape()[0] {
            let r = &profiles[next];
            next += 1;
            let xi = Image::from_tensor(x, n)?;
            let yi = Image::from_tensor(&y_hat, n)?;
            let target = match frontal.get(&(r.subject_id, r.attribute, r.illumination)) {
                Some(f) => Some(load_face(root, f, size, opts.align)?.0),
                None => None,
            };
            let mut strip = vec![&xi, &yi];
            if let Some(t) = &target {
                strip.push(t);
            }
            let stem = r
                .image_ref
                .trim_end_matches(".png")
                .replace(['/', '\\'], "_");
            let path = out.join(format!("{stem}.png"));
            Image::hstack(&strip)?.save(&path)?;
            written.push(path);
        }
        Ok(())
    })?;
    Ok(written)
}
