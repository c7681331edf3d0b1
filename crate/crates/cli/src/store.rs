//! Content hashing, atomic writes, artifact manifests and the stage cache.
//!
//! Every artifact `x` is accompanied by `x.manifest.json` recording the stage
//! that produced it, the hash of that stage's configuration, the hashes of its
//! upstream inputs and the hash of `x` itself.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// Environment variable naming the shared stage cache.
pub const CACHE_ENV: &str = "MMSPOT_CACHE_DIR";

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a value's JSON serialization.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    hash_bytes(&serde_json::to_vec(value).expect("value serializes"))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hash_bytes(&bytes))
}

/// Hash of an ordered list of files. Only contents and order matter.
pub fn hash_files(paths: &[PathBuf]) -> CliResult<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        hasher.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    /// Upstream artifact name to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Hash of the artifact this manifest describes.
    pub output: String,
    /// Stage-specific metadata, e.g. the sequence identity for features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// What a stage is about to compute: everything in a manifest except the output.
#[derive(Debug, Clone, PartialEq)]
pub struct StageKey {
    pub stage: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
}

impl StageKey {
    pub fn new(stage: &str, config_hash: String) -> Self {
        Self {
            stage: stage.to_owned(),
            config_hash,
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, name: &str, hash: impl Into<String>) -> Self {
        self.inputs.insert(name.to_owned(), hash.into());
        self
    }

    /// Cache key: hash of stage, config hash and inputs.
    pub fn digest(&self) -> String {
        hash_json(&(&self.stage, &self.config_hash, &self.inputs))
    }

    pub fn manifest(&self, output: &[u8], meta: Option<serde_json::Value>) -> Manifest {
        Manifest {
            stage: self.stage.clone(),
            config_hash: self.config_hash.clone(),
            inputs: self.inputs.clone(),
            output: hash_bytes(output),
            meta,
        }
    }

    pub fn matches(&self, m: &Manifest) -> bool {
        m.stage == self.stage && m.config_hash == self.config_hash && m.inputs == self.inputs
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(MANIFEST_SUFFIX);
    PathBuf::from(name)
}

/// Writes an artifact and its manifest, both atomically.
pub fn write_artifact(path: &Path, bytes: &[u8], manifest: &Manifest) -> CliResult<()> {
    debug_assert_eq!(manifest.output, hash_bytes(bytes));
    write_atomic(path, bytes)?;
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(&manifest_path(path), text.as_bytes())
}

pub fn read_manifest(artifact: &Path) -> CliResult<Manifest> {
    let path = manifest_path(artifact);
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Data(format!(
            "broken chain: {} has no readable manifest ({e})",
            artifact.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("broken chain: {}: {e}", path.display())))
}

/// Reads an artifact and checks it against its manifest.
pub fn read_verified(artifact: &Path) -> CliResult<(Vec<u8>, Manifest)> {
    let manifest = read_manifest(artifact)?;
    let bytes = fs::read(artifact).map_err(|e| io_err(artifact, e))?;
    if hash_bytes(&bytes) != manifest.output {
        return Err(CliError::Data(format!(
            "broken chain: {} does not match its manifest",
            artifact.display()
        )));
    }
    Ok((bytes, manifest))
}

/// Content-addressed store of stage outputs shared across runs.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry(&self, key: &StageKey) -> PathBuf {
        let digest = key.digest();
        self.root.join(&key.stage).join(&digest[..2]).join(digest)
    }

    /// A cached output for `key`. Corrupt entries are reported and ignored.
    pub fn get(&self, key: &StageKey) -> Option<Vec<u8>> {
        let path = self.entry(key);
        if !manifest_path(&path).exists() {
            return None;
        }
        match read_verified(&path) {
            Ok((bytes, m)) if key.matches(&m) => Some(bytes),
            Ok(_) => {
                warn!("cache entry {} has a foreign manifest; recomputing", path.display());
                None
            }
            Err(e) => {
                warn!("ignoring cache entry: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &StageKey, bytes: &[u8]) -> CliResult<()> {
        write_artifact(&self.entry(key), bytes, &key.manifest(bytes, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/x.bin");
        let key = StageKey::new("extract", "cfg".into()).input("frames", "h1");
        let m = key.manifest(b"hello", None);
        write_artifact(&path, b"hello", &m).unwrap();
        let (bytes, back) = read_verified(&path).unwrap();
        assert_eq!(bytes, b"hello");
        assert_eq!(back, m);
        assert!(key.matches(&back));
        assert!(!StageKey::new("extract", "cfg".into())
            .input("frames", "h2")
            .matches(&back));

        fs::write(&path, b"hellO").unwrap();
        let err = read_verified(&path).unwrap_err();
        assert!(err.to_string().contains("broken chain"), "{err}");
        assert_eq!(err.exit_code(), 3);

        fs::remove_file(manifest_path(&path)).unwrap();
        assert!(read_verified(&path).is_err());
    }

    #[test]
    fn cache_hits_only_on_identical_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let key = StageKey::new("align", "c".into()).input("frames", "f");
        assert!(cache.get(&key).is_none());
        cache.put(&key, b"[1,2]").unwrap();
        assert_eq!(cache.get(&key).unwrap(), b"[1,2]");
        assert!(cache.get(&key.clone().input("frames", "g")).is_none());

        let entry = cache.entry(&key);
        fs::write(&entry, b"junk").unwrap();
        assert!(cache.get(&key).is_none());
    }

    #[test]
    fn file_list_hash_depends_on_order_and_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        fs::write(&a, b"1").unwrap();
        fs::write(&b, b"2").unwrap();
        let ab = hash_files(&[a.clone(), b.clone()]).unwrap();
        assert_ne!(ab, hash_files(&[b.clone(), a.clone()]).unwrap());
        fs::write(&b, b"3").unwrap();
        assert_ne!(ab, hash_files(&[a, b]).unwrap());
    }
}
