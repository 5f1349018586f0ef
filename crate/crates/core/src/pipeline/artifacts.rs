//! Artifact bookkeeping for pipeline runs: content-hash manifest, output
//! directory locking, and the canonical artifact file names.
//!
//! Every command writes its outputs through [`Workspace`], which records a
//! SHA-256 per file in `manifest.json` together with the hashes of the
//! inputs it consumed. Downstream commands verify those hashes before use,
//! so a stale cache or a checkpoint from a different run is refused instead
//! of silently producing mixed results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
pub const CONFIG_FILE: &str = "config.resolved";

pub const TEACHER_CKPT: &str = "teacher.json";
pub const TEACHER_CURVE: &str = "teacher_ce.csv";
pub const CACHE_FILE: &str = "cache.jsonl";
pub const THETA_CKPT: &str = "theta.json";
pub const DISTILL_CURVE: &str = "distill_curve.csv";
pub const QUERY_RESULT: &str = "query_result.json";
pub const BENCH_TIMINGS: &str = "bench_timings.csv";
pub const BENCH_SUMMARY: &str = "bench_summary.json";
pub const ABLATION_TABLE: &str = "ablation.csv";
pub const SWEEP_TABLE: &str = "sweep.csv";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Manifest entry for one produced artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sha256: String,
    /// Command that produced the file.
    pub command: String,
    /// Input artifact name → its hash at the time it was consumed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub version: u32,
    pub entries: BTreeMap<String, ManifestEntry>,
}

/// A locked output directory with its manifest loaded.
///
/// Creating a `Workspace` takes an exclusive lock file in the directory;
/// dropping it releases the lock. Concurrent commands must therefore use
/// distinct output directories.
#[derive(Debug)]
pub struct Workspace {
    dir: PathBuf,
    manifest: Manifest,
    lock_path: PathBuf,
}

impl Workspace {
    pub fn open(dir: &Path) -> Result<Workspace> {
        std::fs::create_dir_all(dir)?;
        let lock_path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                use std::io::Write as _;
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::usage(format!(
                    "output directory '{}' is locked by another run; wait for it or remove '{}'",
                    dir.display(),
                    lock_path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::validation(format!("corrupt manifest '{}': {e}", manifest_path.display()))
            })?
        } else {
            Manifest { version: 1, entries: BTreeMap::new() }
        };
        Ok(Workspace { dir: dir.to_path_buf(), manifest, lock_path })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write an artifact and record its hash with the inputs that produced
    /// it. `inputs` must already be verified names in this manifest.
    pub fn put(&mut self, name: &str, bytes: &[u8], command: &str, inputs: &[&str]) -> Result<()> {
        let mut input_hashes = BTreeMap::new();
        for input in inputs {
            let entry = self.manifest.entries.get(*input).ok_or_else(|| {
                Error::structural(format!("input artifact '{input}' missing from manifest"))
            })?;
            input_hashes.insert((*input).to_string(), entry.sha256.clone());
        }
        std::fs::write(self.path_of(name), bytes)?;
        self.manifest.entries.insert(
            name.to_string(),
            ManifestEntry {
                sha256: sha256_hex(bytes),
                command: command.to_string(),
                inputs: input_hashes,
            },
        );
        self.flush_manifest()
    }

    /// Read an artifact, verifying its bytes against the manifest hash.
    pub fn get_verified(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.path_of(name);
        let entry = self.manifest.entries.get(name).ok_or_else(|| {
            Error::usage(format!(
                "artifact '{name}' is not in the manifest of '{}'; run the producing step first",
                self.dir.display()
            ))
        })?;
        if !path.exists() {
            return Err(Error::usage(format!(
                "artifact '{}' is in the manifest but missing on disk",
                path.display()
            )));
        }
        let bytes = std::fs::read(&path)?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(Error::validation(format!(
                "artifact '{name}' does not match the manifest (expected {}, found {}); \
                 it was modified or produced by a different run — regenerate it",
                &entry.sha256[..12],
                &found[..12]
            )));
        }
        Ok(bytes)
    }

    pub fn has(&self, name: &str) -> bool {
        self.manifest.entries.contains_key(name)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn flush_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::structural(format!("manifest serialization failed: {e}")))?;
        std::fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock_path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("jepa-ir-ws-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn put_then_get_round_trips_and_verifies() {
        let dir = tmp("roundtrip");
        let mut ws = Workspace::open(&dir).unwrap();
        ws.put("a.txt", b"hello", "test", &[]).unwrap();
        assert_eq!(ws.get_verified("a.txt").unwrap(), b"hello");
        ws.put("b.txt", b"world", "test", &["a.txt"]).unwrap();
        assert_eq!(ws.manifest().entries["b.txt"].inputs["a.txt"], sha256_hex(b"hello"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tmp("tamper");
        let mut ws = Workspace::open(&dir).unwrap();
        ws.put("a.txt", b"hello", "test", &[]).unwrap();
        std::fs::write(dir.join("a.txt"), b"HELLO").unwrap();
        let err = ws.get_verified("a.txt").unwrap_err();
        assert!(err.to_string().contains("does not match the manifest"), "{err}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_artifact_is_a_usage_error() {
        let dir = tmp("unknown");
        let ws = Workspace::open(&dir).unwrap();
        let err = ws.get_verified("ghost.json").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn lock_excludes_second_opener_and_is_released_on_drop() {
        let dir = tmp("lock");
        let ws = Workspace::open(&dir).unwrap();
        let err = Workspace::open(&dir).unwrap_err();
        assert!(err.to_string().contains("locked"), "{err}");
        assert_eq!(err.exit_code(), 2);
        drop(ws);
        let ws2 = Workspace::open(&dir).unwrap();
        drop(ws2);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn manifest_survives_reopen() {
        let dir = tmp("reopen");
        {
            let mut ws = Workspace::open(&dir).unwrap();
            ws.put("a.txt", b"persist", "test", &[]).unwrap();
        }
        let ws = Workspace::open(&dir).unwrap();
        assert!(ws.has("a.txt"));
        assert_eq!(ws.get_verified("a.txt").unwrap(), b"persist");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
