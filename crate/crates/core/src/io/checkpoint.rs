//! Binary checkpoint archive.
//!
//! Layout: 8-byte magic `ADVTEXCK`, a little-endian `u64` header length, a
//! JSON header describing every tensor, then all tensor data as
//! little-endian `f64` in header order.

use std::path::Path;

use advtex_autograd::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ADVTEXCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    config_hash: Option<String>,
    metadata: serde_json::Value,
    groups: Vec<GroupEntry>,
}

/// Named parameter groups plus free-form JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config_hash: Option<String>,
    pub metadata: serde_json::Value,
    pub groups: Vec<(String, ParamSet)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            config_hash: None,
            metadata: serde_json::Value::Null,
            groups: Vec::new(),
        }
    }

    pub fn with_group(mut self, name: impl Into<String>, params: ParamSet) -> Self {
        self.groups.push((name.into(), params));
        self
    }

    pub fn group(&self, name: &str) -> Result<&ParamSet> {
        self.groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::ArtifactMismatch(format!("checkpoint has no group {name:?}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ArtifactMismatch(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            config_hash: self.config_hash.clone(),
            metadata: self.metadata.clone(),
            groups: self
                .groups
                .iter()
                .map(|(name, params)| GroupEntry {
                    name: name.clone(),
                    tensors: params
                        .iter()
                        .map(|(n, t)| TensorEntry {
                            name: n.to_string(),
                            shape: t.shape().to_vec(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let numel: usize = self.groups.iter().map(|(_, p)| p.numel()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * numel);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, params) in &self.groups {
            for (_, t) in params.iter() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses an archive; `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |d: &str| Error::format("checkpoint", origin, d);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {}", header.format_version)));
        }
        let mut cursor = 16 + len;
        let mut groups = Vec::with_capacity(header.groups.len());
        for g in header.groups {
            let mut params = ParamSet::new();
            for t in g.tensors {
                let n: usize = t.shape.iter().product();
                let end = n
                    .checked_mul(8)
                    .and_then(|b| b.checked_add(cursor))
                    .filter(|&e| e <= bytes.len())
                    .ok_or_else(|| bad("truncated tensor data"))?;
                let data = bytes[cursor..end]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect::<Vec<_>>();
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(bad(&format!("tensor {} holds non-finite values", t.name)));
                }
                cursor = end;
                params.push(t.name, Tensor::new(&t.shape, data));
            }
            groups.push((g.name, params));
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            kind: header.kind,
            config_hash: header.config_hash,
            metadata: header.metadata,
            groups,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
