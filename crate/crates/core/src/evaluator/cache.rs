use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::rank::{EmbeddingSet, Source};
use crate::dataset::ImageRecord;
use crate::networks::hex_digest;
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"FRNTEMBD";
pub const CACHE_VERSION: u32 = 1;

/// Hash of the records' canonical JSON lines.
pub fn manifest_hash(records: &[ImageRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("record serializes"));
        h.update(b"\n");
    }
    hex_digest(&h.finalize())
}

/// Cache key for embeddings of `manifest` by `extractor`; `checkpoint` is
/// empty for sets that do not depend on the generator.
pub fn cache_key(checkpoint: &str, manifest: &str, extractor: &str, source: Source) -> String {
    let mut h = Sha256::new();
    for part in [checkpoint, manifest, extractor, source.as_str()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex_digest(&h.finalize())
}

/// Layout: magic, version, 64-byte hex key, source byte, row count and
/// dimension as `u64`, ids as `u32`, then row-major `f64`, all little-endian.
pub fn save_embeddings(path: &Path, key: &str, set: &EmbeddingSet) -> Result<()> {
    let mut out = Vec::with_capacity(97 + set.len() * 4 + set.data().len() * 8);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(key.as_bytes());
    out.push(match set.source {
        Source::Original => 0,
        Source::Frontalized => 1,
    });
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u64).to_le_bytes());
    for id in set.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, out).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// The cached set, or `None` when the file is absent, stale or unreadable.
pub fn load_embeddings(path: &Path, key: &str) -> Option<EmbeddingSet> {
    let bytes = fs::read(path).ok()?;
    let mut at = 0;
    let mut take = |n: usize| -> Option<&[u8]> {
        let s = bytes.get(at..at + n)?;
        at += n;
        Some(s)
    };
    if take(8)? != CACHE_MAGIC {
        return None;
    }
    if u32::from_le_bytes(take(4)?.try_into().ok()?) != CACHE_VERSION {
        return None;
    }
    if take(key.len())? != key.as_bytes() {
        return None;
    }
    let source = match take(1)?[0] {
        0 => Source::Original,
        1 => Source::Frontalized,
        _ => return None,
    };
    let n = usize::try_from(u64::from_le_bytes(take(8)?.try_into().ok()?)).ok()?;
    let dim = usize::try_from(u64::from_le_bytes(take(8)?.try_into().ok()?)).ok()?;
    let ids = take(n.checked_mul(4)?)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let data = take(n.checked_mul(dim)?.checked_mul(8)?)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if at != bytes.len() {
        return None;
    }
    EmbeddingSet::new(ids, dim, data, source).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        let set = EmbeddingSet::new(
            vec![3, 1],
            2,
            vec![0.1, -2.0, 1e-300, 7.5],
            Source::Frontalized,
        )
        .unwrap();
        let key = cache_key("ck", "m", "x", Source::Frontalized);
        save_embeddings(&p, &key, &set).unwrap();
        assert_eq!(load_embeddings(&p, &key), Some(set));
        assert_eq!(
            load_embeddings(&p, &cache_key("ck2", "m", "x", Source::Frontalized)),
            None
        );
        assert_ne!(key, cache_key("ck", "m", "x", Source::Original));
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert_eq!(load_embeddings(&p, &key), None);
    }
}
