//! Versioned model checkpoints.
//!
//! A checkpoint is a single JSON document: `{version, dtype, config, meta,
//! params_hash, params}` where each parameter group carries its shape, its
//! trainable flag, and its data as base64 of little-endian IEEE floats.
//! Base64-of-LE was chosen over decimal text because it is exact (bit-level
//! round trip, no parse/format drift) and platform-stable. `params_hash` is
//! a SHA-256 over names, shapes and raw bytes in sorted-name order; caches
//! and benchmark manifests use it to refuse mismatched artifact pairs.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::{ParamSet, Real, Tensor};
use crate::tinylm::config::LMConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct GroupRecord {
    shape: Vec<usize>,
    trainable: bool,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    version: u32,
    dtype: String,
    config: LMConfig,
    #[serde(default)]
    meta: serde_json::Value,
    params_hash: String,
    params: BTreeMap<String, GroupRecord>,
}

/// A loaded checkpoint: model shape, parameters, caller-defined metadata and
/// the content hash of the parameters.
#[derive(Debug)]
pub struct Checkpoint<T: Real> {
    pub config: LMConfig,
    pub params: ParamSet<T>,
    pub meta: serde_json::Value,
    pub params_hash: String,
}

/// SHA-256 over all parameter groups: for each group in sorted-name order,
/// the name, a zero byte, the shape as little-endian u64s, then the raw
/// little-endian float bytes.
pub fn params_hash<T: Real>(params: &ParamSet<T>) -> String {
    let mut hasher = Sha256::new();
    for (name, group) in params.iter() {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        for &dim in group.tensor.shape() {
            hasher.update((dim as u64).to_le_bytes());
        }
        let mut bytes = Vec::with_capacity(group.tensor.len() * T::BYTES);
        for &v in group.tensor.data() {
            v.write_le(&mut bytes);
        }
        hasher.update(&bytes);
    }
    format!("{:x}", hasher.finalize())
}

/// Serialize a checkpoint to its JSON text form. `meta` is an arbitrary
/// JSON object for caller state (template hash, training provenance, …);
/// pass `Value::Null` if unused.
pub fn checkpoint_to_string<T: Real>(
    config: &LMConfig,
    params: &ParamSet<T>,
    meta: serde_json::Value,
) -> Result<String> {
    config.validate()?;
    let mut groups = BTreeMap::new();
    for (name, group) in params.iter() {
        let mut bytes = Vec::with_capacity(group.tensor.len() * T::BYTES);
        for &v in group.tensor.data() {
            v.write_le(&mut bytes);
        }
        groups.insert(
            name.to_string(),
            GroupRecord {
                shape: group.tensor.shape().to_vec(),
                trainable: group.trainable,
                data: B64.encode(&bytes),
            },
        );
    }
    let envelope = Envelope {
        version: CHECKPOINT_VERSION,
        dtype: T::DTYPE.to_string(),
        config: config.clone(),
        meta,
        params_hash: params_hash(params),
        params: groups,
    };
    Ok(serde_json::to_string_pretty(&envelope)?)
}

/// Write a checkpoint file; see [`checkpoint_to_string`].
pub fn save_checkpoint<T: Real>(
    path: &Path,
    config: &LMConfig,
    params: &ParamSet<T>,
    meta: serde_json::Value,
) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(config, params, meta)?)?;
    Ok(())
}

/// Parse checkpoint JSON text. The requested precision must match the
/// stored dtype; the embedded hash is recomputed and verified.
pub fn checkpoint_from_str<T: Real>(json: &str) -> Result<Checkpoint<T>> {
    let envelope: Envelope = serde_json::from_str(json)?;
    if envelope.version != CHECKPOINT_VERSION {
        return Err(Error::validation(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            envelope.version
        )));
    }
    if envelope.dtype != T::DTYPE {
        return Err(Error::validation(format!(
            "checkpoint dtype {} does not match requested {}",
            envelope.dtype,
            T::DTYPE
        )));
    }
    envelope.config.validate()?;
    let mut params = ParamSet::new();
    for (name, rec) in &envelope.params {
        let bytes = B64
            .decode(&rec.data)
            .map_err(|e| Error::validation(format!("group '{name}': bad base64: {e}")))?;
        let expect: usize = rec.shape.iter().product::<usize>() * T::BYTES;
        if bytes.len() != expect {
            return Err(Error::validation(format!(
                "group '{name}': {} bytes but shape {:?} wants {expect}",
                bytes.len(),
                rec.shape
            )));
        }
        let data: Vec<T> = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
        let tensor = Tensor::new(rec.shape.clone(), data)?;
        tensor.ensure_finite(&format!("checkpoint group '{name}'"))?;
        if rec.trainable {
            params.insert(name, tensor);
        } else {
            params.insert_frozen(name, tensor);
        }
    }
    let actual = params_hash(&params);
    if actual != envelope.params_hash {
        return Err(Error::validation(format!(
            "checkpoint is corrupt: params hash {} != stored {}",
            &actual[..12.min(actual.len())],
            &envelope.params_hash[..12.min(envelope.params_hash.len())]
        )));
    }
    Ok(Checkpoint {
        config: envelope.config,
        params,
        meta: envelope.meta,
        params_hash: envelope.params_hash,
    })
}

/// Read and parse a checkpoint file; see [`checkpoint_from_str`].
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read checkpoint {}: {e}", path.display())))?;
    checkpoint_from_str(&json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinylm::model::init_params;

    fn small_cfg() -> LMConfig {
        LMConfig { d_model: 8, n_heads: 2, n_layers: 1, max_window: 16, l_d_max: 4, ..Default::default() }
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = small_cfg();
        let mut params: ParamSet<f32> = init_params(&cfg, 42).unwrap();
        params.set_trainable("head.b", false).unwrap();
        let meta = serde_json::json!({"purpose": "round-trip test"});
        save_checkpoint(&path, &cfg, &params, meta.clone()).unwrap();
        let loaded = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(loaded.config, cfg);
        assert_eq!(loaded.meta, meta);
        assert_eq!(loaded.params_hash, params_hash(&params));
        assert_eq!(loaded.params.len(), params.len());
        for (name, group) in params.iter() {
            assert_eq!(&group.tensor, loaded.params.get(name).unwrap(), "group {name}");
            assert_eq!(group.trainable, loaded.params.is_trainable(name), "flag {name}");
        }
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = small_cfg();
        let params: ParamSet<f32> = init_params(&cfg, 1).unwrap();
        save_checkpoint(&path, &cfg, &params, serde_json::Value::Null).unwrap();
        let err = load_checkpoint::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("dtype"));
    }

    #[test]
    fn corruption_is_detected_by_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = small_cfg();
        let params: ParamSet<f32> = init_params(&cfg, 2).unwrap();
        save_checkpoint(&path, &cfg, &params, serde_json::Value::Null).unwrap();
        // Swap one base64 payload for another group's payload of equal shape.
        let mut envelope: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let stolen = envelope["params"]["layer0.attn.wk"]["data"].clone();
        envelope["params"]["layer0.attn.wq"]["data"] = stolen;
        std::fs::write(&path, serde_json::to_string(&envelope).unwrap()).unwrap();
        let err = load_checkpoint::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("corrupt"), "{err}");
    }

    #[test]
    fn hash_is_sensitive_to_values_and_names() {
        let cfg = small_cfg();
        let a: ParamSet<f32> = init_params(&cfg, 3).unwrap();
        let b: ParamSet<f32> = init_params(&cfg, 4).unwrap();
        assert_ne!(params_hash(&a), params_hash(&b));
        let mut c = a.clone();
        c.get_mut("head.w").unwrap().data_mut()[0] += 1.0;
        assert_ne!(params_hash(&a), params_hash(&c));
    }

    #[test]
    fn missing_file_is_a_validation_error() {
        let err = load_checkpoint::<f32>(Path::new("/nonexistent/model.json")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
