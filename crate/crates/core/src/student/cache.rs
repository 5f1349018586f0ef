//! Offline document cache: per-document hidden states over the padded slot.
//!
//! Because attention is causal and every render left-pads the document into
//! a fixed-width slot, the slot's hidden states do not depend on whatever
//! query follows. They can therefore be computed once per document, offline,
//! and reused verbatim for every query — the cache entries here are exactly
//! the doc-span states any joint pass would produce (asserted in the tests).

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::DocRec;
use crate::error::{Error, Result};
use crate::numcore::{ParamSet, Real, Tensor};
use crate::tinylm::{encode, pad_document, params_hash, tokenize, LMConfig};

pub const CACHE_VERSION: u32 = 1;

/// One cached document: the slot's hidden states and the latent `z` used to
/// condition the predictor, which is always the state at the slot's final
/// position (left-padding guarantees that position holds real content).
#[derive(Debug, Clone, PartialEq)]
pub struct DocCacheEntry<T: Real> {
    pub doc_id: String,
    /// SHA-256 of the raw document text, for idempotence checks.
    pub content_hash: String,
    /// `[l_d_max, d]` final-layer states over the padded slot.
    pub doc_states: Tensor<T>,
    /// `[d]` copy of the last row of `doc_states`.
    pub z: Tensor<T>,
}

impl<T: Real> DocCacheEntry<T> {
    fn validate(&self, d: usize, l_d_max: usize) -> Result<()> {
        if self.doc_states.shape() != [l_d_max, d] {
            return Err(Error::structural(format!(
                "cache entry '{}': doc_states shape {:?}, expected [{l_d_max}, {d}]",
                self.doc_id,
                self.doc_states.shape()
            )));
        }
        if self.z.shape() != [d] {
            return Err(Error::structural(format!(
                "cache entry '{}': z shape {:?}, expected [{d}]",
                self.doc_id,
                self.z.shape()
            )));
        }
        if self.z.data() != self.doc_states.row(l_d_max - 1) {
            return Err(Error::structural(format!(
                "cache entry '{}': z is not the last row of doc_states",
                self.doc_id
            )));
        }
        self.doc_states.ensure_finite("cached doc_states")?;
        Ok(())
    }
}

/// The full write-once document index, keyed by doc id.
#[derive(Debug, Clone, PartialEq)]
pub struct DocCache<T: Real> {
    /// Hash of the backbone parameters the states were computed with; scoring
    /// against a different backbone is refused upstream via this value.
    pub backbone_hash: String,
    pub d: usize,
    pub l_d_max: usize,
    /// Sorted by ascending doc id; ids unique.
    pub entries: Vec<DocCacheEntry<T>>,
}

impl<T: Real> DocCache<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&DocCacheEntry<T>> {
        self.entries
            .binary_search_by(|e| e.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.entries.windows(2) {
            if pair[0].doc_id >= pair[1].doc_id {
                return Err(Error::structural(format!(
                    "cache entries out of order or duplicated at '{}'",
                    pair[1].doc_id
                )));
            }
        }
        for entry in &self.entries {
            entry.validate(self.d, self.l_d_max)?;
        }
        Ok(())
    }
}

/// SHA-256 of a document's raw text, hex-encoded.
pub fn content_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Encode every document over its padded slot and collect the cache.
///
/// The backbone must be fully frozen: the cache stores activations, and a
/// backbone that can still move would silently invalidate them. Repeated doc
/// ids are accepted when the content matches (the duplicate is dropped);
/// the same id with different content is a hard error.
pub fn index_documents<T: Real>(
    params: &ParamSet<T>,
    cfg: &LMConfig,
    docs: &[DocRec],
) -> Result<DocCache<T>> {
    if params.any_trainable() {
        return Err(Error::structural(
            "index_documents requires a fully frozen backbone; freeze all groups first",
        ));
    }
    cfg.validate()?;

    let mut by_id: BTreeMap<&str, &DocRec> = BTreeMap::new();
    for doc in docs {
        let hash = content_hash(&doc.text);
        if let Some(prev) = by_id.get(doc.id.as_str()) {
            if content_hash(&prev.text) != hash {
                return Err(Error::structural(format!(
                    "doc id '{}' appears twice with different content",
                    doc.id
                )));
            }
            continue;
        }
        by_id.insert(&doc.id, doc);
    }

    let mut entries = Vec::with_capacity(by_id.len());
    for (_, doc) in by_id {
        let slot = pad_document(cfg, &tokenize(cfg, &doc.text));
        let hidden = encode(params, cfg, &slot, 0)?;
        let doc_states = hidden.states;
        let z = Tensor::from_vec(doc_states.row(cfg.l_d_max - 1).to_vec());
        entries.push(DocCacheEntry {
            doc_id: doc.id.clone(),
            content_hash: content_hash(&doc.text),
            doc_states,
            z,
        });
    }

    let cache = DocCache {
        backbone_hash: params_hash(params),
        d: cfg.d_model,
        l_d_max: cfg.l_d_max,
        entries,
    };
    cache.validate()?;
    Ok(cache)
}

#[derive(Serialize, Deserialize)]
struct ArrayRecord {
    shape: Vec<usize>,
    data: String,
}

impl ArrayRecord {
    fn pack<T: Real>(tensor: &Tensor<T>) -> Self {
        let mut bytes = Vec::with_capacity(tensor.len() * T::BYTES);
        for &v in tensor.data() {
            v.write_le(&mut bytes);
        }
        ArrayRecord { shape: tensor.shape().to_vec(), data: B64.encode(&bytes) }
    }

    fn unpack<T: Real>(&self, what: &str) -> Result<Tensor<T>> {
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| Error::Parse { line: 0, msg: format!("{what}: bad base64: {e}") })?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != n * T::BYTES {
            return Err(Error::structural(format!(
                "{what}: {} bytes for shape {:?} at {} bytes/value",
                bytes.len(),
                self.shape,
                T::BYTES
            )));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in bytes.chunks_exact(T::BYTES) {
            data.push(T::read_le(chunk));
        }
        Tensor::new(self.shape.clone(), data)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CacheRecord {
    Header { version: u32, dtype: String, backbone_hash: String, d: usize, l_d_max: usize },
    Doc { doc_id: String, content_hash: String, doc_states: ArrayRecord, z: ArrayRecord },
}

/// Serialize a cache as a JSONL record stream: one header line, then one
/// line per document. Arrays are little-endian bytes in base64, the same
/// packing as checkpoints.
pub fn cache_to_string<T: Real>(cache: &DocCache<T>) -> Result<String> {
    cache.validate()?;
    let mut out = String::new();
    let header = CacheRecord::Header {
        version: CACHE_VERSION,
        dtype: T::DTYPE.to_string(),
        backbone_hash: cache.backbone_hash.clone(),
        d: cache.d,
        l_d_max: cache.l_d_max,
    };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for entry in &cache.entries {
        let rec = CacheRecord::Doc {
            doc_id: entry.doc_id.clone(),
            content_hash: entry.content_hash.clone(),
            doc_states: ArrayRecord::pack(&entry.doc_states),
            z: ArrayRecord::pack(&entry.z),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_cache<T: Real>(path: &Path, cache: &DocCache<T>) -> Result<()> {
    std::fs::write(path, cache_to_string(cache)?)?;
    Ok(())
}

/// Parse cache text produced by [`cache_to_string`], verifying version,
/// dtype, shapes, and the z-is-last-row invariant. The dtype must match `T`
/// exactly; re-index rather than silently casting activations.
pub fn cache_from_str<T: Real>(text: &str) -> Result<DocCache<T>> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty cache file".into() })?;
    let header: CacheRecord = serde_json::from_str(header_line)
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let (backbone_hash, d, l_d_max) = match header {
        CacheRecord::Header { version, dtype, backbone_hash, d, l_d_max } => {
            if version != CACHE_VERSION {
                return Err(Error::structural(format!(
                    "cache version {version}, this build reads {CACHE_VERSION}"
                )));
            }
            if dtype != T::DTYPE {
                return Err(Error::structural(format!(
                    "cache dtype {dtype}, requested {}; re-index at the desired precision",
                    T::DTYPE
                )));
            }
            (backbone_hash, d, l_d_max)
        }
        CacheRecord::Doc { .. } => {
            return Err(Error::Parse { line: 1, msg: "first record is not a header".into() })
        }
    };

    let mut entries = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
        match rec {
            CacheRecord::Header { .. } => {
                return Err(Error::Parse { line: idx + 1, msg: "repeated header record".into() })
            }
            CacheRecord::Doc { doc_id, content_hash, doc_states, z } => {
                entries.push(DocCacheEntry {
                    doc_states: doc_states.unpack(&format!("doc '{doc_id}' states"))?,
                    z: z.unpack(&format!("doc '{doc_id}' z"))?,
                    doc_id,
                    content_hash,
                });
            }
        }
    }
    let cache = DocCache { backbone_hash, d, l_d_max, entries };
    cache.validate()?;
    Ok(cache)
}

/// Read and parse a cache file; see [`cache_from_str`].
pub fn load_cache<T: Real>(path: &Path) -> Result<DocCache<T>> {
    cache_from_str(&std::fs::read_to_string(path)?)
}
