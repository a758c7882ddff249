use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Writes `path` through a temporary file in the same directory and renames
/// it into place once `write` succeeds.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> Result<(), Failure>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        write(&mut w)?;
        w.flush().map_err(|e| Failure::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Failure::runtime(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Failure::io(path, e))
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, Failure> {
    let mut f = fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Failure::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every stage's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hash of the resolved configuration as compact JSON.
pub fn config_hash<T: Serialize>(config: &T) -> Result<(serde_json::Value, String), Failure> {
    let value = serde_json::to_value(config).map_err(|e| Failure::runtime(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| Failure::runtime(e.to_string()))?;
    Ok((value, sha256_hex(&bytes)))
}

#[derive(Debug, Clone)]
pub struct ManifestBuilder {
    command: &'static str,
    seed: Option<u64>,
    config: serde_json::Value,
    config_sha256: String,
    inputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new<T: Serialize>(command: &'static str, seed: Option<u64>, config: &T) -> Result<Self, Failure> {
        let (config, config_sha256) = config_hash(config)?;
        Ok(ManifestBuilder { command, seed, config, config_sha256, inputs: Vec::new() })
    }

    pub fn config_sha256(&self) -> &str {
        &self.config_sha256
    }

    pub fn input(mut self, path: impl Into<PathBuf>) -> Self {
        self.inputs.push(path.into());
        self
    }

    /// Writes `manifest.json` into `dir`, hashing inputs and the listed
    /// outputs (relative to `dir`).
    pub fn write(self, dir: &Path, outputs: &[&str]) -> Result<(), Failure> {
        let digest = |p: &Path, shown: String| -> Result<FileDigest, Failure> {
            Ok(FileDigest { path: shown, sha256: file_sha256(p)? })
        };
        let inputs = self
            .inputs
            .iter()
            .filter(|p| p.is_file())
            .map(|p| digest(p, p.display().to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let outputs = outputs
            .iter()
            .map(|name| digest(&dir.join(name), name.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config: self.config,
            config_sha256: self.config_sha256,
            inputs,
            outputs,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }
}

/// Fails when `dir` already holds a manifest for a different configuration,
/// so resumed runs never mix replicas from two configs.
pub fn check_resumable(dir: &Path, command: &str, config_sha256: &str) -> Result<(), Failure> {
    let path = dir.join(MANIFEST_FILE);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let old: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let same_command = old.get("command").and_then(|v| v.as_str()) == Some(command);
    let same_config = old.get("config_sha256").and_then(|v| v.as_str()) == Some(config_sha256);
    if same_command && same_config {
        Ok(())
    } else {
        Err(Failure::validation(format!(
            "{} belongs to a different run; choose another --out directory",
            path.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, |w| w.write_all(b"one").map_err(|e| Failure::io("a", e))).unwrap();
        write_atomic(&path, |w| w.write_all(b"two").map_err(|e| Failure::io("a", e))).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn failed_write_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        let res = write_atomic(&path, |_| Err(Failure::runtime("boom")));
        assert!(res.is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn resume_guard() {
        let dir = tempfile::tempdir().unwrap();
        check_resumable(dir.path(), "benchmark", "x").unwrap();
        ManifestBuilder::new("benchmark", Some(1), &1u32).unwrap().write(dir.path(), &[]).unwrap();
        let (_, h) = config_hash(&1u32).unwrap();
        check_resumable(dir.path(), "benchmark", &h).unwrap();
        assert!(check_resumable(dir.path(), "benchmark", "other").is_err());
        assert!(check_resumable(dir.path(), "simulate", &h).is_err());
    }
}
