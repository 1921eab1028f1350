use std::fs;
use std::path::Path;

use frontalize_tensor::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FRNTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in `f64` elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: String,
    pub seed: u64,
    pub step: u64,
    pub epochs_completed: u64,
    /// Free-form configuration needed to rebuild the networks.
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub payload_sha256: String,
}

/// Versioned container: magic, `u32` version, `u32` header length, JSON
/// header, then every tensor as little-endian `f64` in header order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    tensors: Vec<Tensor>,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(
        arch: impl Into<String>,
        seed: u64,
        step: u64,
        epochs_completed: u64,
        config: serde_json::Value,
    ) -> Self {
        Self {
            header: CheckpointHeader {
                arch: arch.into(),
                seed,
                step,
                epochs_completed,
                config,
                tensors: Vec::new(),
                payload_sha256: String::new(),
            },
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let offset = self.tensors.iter().map(Tensor::len).sum();
        self.header.tensors.push(TensorEntry {
            name: name.into(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        self.tensors.push(tensor);
    }

    /// Adds every tensor of `params` under `prefix/`.
    pub fn push_set(&mut self, prefix: &str, params: &ParamSet) {
        for (name, t) in params.names().iter().zip(params.tensors()) {
            self.push(format!("{prefix}/{name}"), t.clone());
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.header
            .tensors
            .iter()
            .position(|e| e.name == name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    /// Rebuilds a parameter set with the names of `template` from `prefix/` entries.
    pub fn param_set(&self, prefix: &str, template: &ParamSet) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (name, t) in template.names().iter().zip(template.tensors()) {
            let stored = self.get(&format!("{prefix}/{name}"))?;
            if stored.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "{prefix}/{name} has shape {:?}, expected {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            out.push(name.clone(), stored.clone());
        }
        Ok(out)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let p = format!("{prefix}/");
        self.header.tensors.iter().any(|e| e.name.starts_with(&p))
    }

    fn payload(&self) -> Vec<u8> {
        let len: usize = self.tensors.iter().map(Tensor::len).sum();
        let mut out = Vec::with_capacity(len * 8);
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.payload();
        let mut header = self.header.clone();
        header.payload_sha256 = hex(&Sha256::digest(&payload));
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("header encoding failed: {e}")))?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let mut header: CheckpointHeader = serde_json::from_slice(body)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let payload = &bytes[16 + hlen..];
        if hex(&Sha256::digest(payload)) != header.payload_sha256 {
            return Err(bad("payload checksum mismatch"));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let len: usize = e.shape.iter().product();
            let start = e.offset * 8;
            let raw = payload.get(start..start + len * 8).ok_or_else(|| {
                Error::Checkpoint(format!("tensor {} runs past the payload", e.name))
            })?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::new(&e.shape, data)?);
        }
        header.payload_sha256.clear();
        Ok(Self { header, tensors })
    }

    /// Content hash of the serialized checkpoint.
    pub fn content_id(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_bytes()?)))
    }

    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
