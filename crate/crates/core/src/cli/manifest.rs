//! Run manifests: what a command read and wrote, with content digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> anyhow::Result<FileDigest> {
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        let absolute = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        Ok(FileDigest { path: absolute.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<RunManifest> {
        if !path.exists() {
            bail!("manifest not found: {}", path.display());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// A recorded file whose current content no longer matches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestMismatch {
    pub path: String,
    pub expected: String,
    /// `None` when the file can no longer be read.
    pub actual: Option<String>,
}

impl std::fmt::Display for DigestMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.actual {
            Some(a) => write!(f, "{}: checksum mismatch (recorded {}, now {a})", self.path, self.expected),
            None => write!(f, "{}: not found (recorded {})", self.path, self.expected),
        }
    }
}

/// Recomputes every input and output digest of `manifest`.
pub fn verify(manifest: &RunManifest) -> Vec<DigestMismatch> {
    manifest
        .inputs
        .iter()
        .chain(&manifest.outputs)
        .filter_map(|d| {
            let actual = FileDigest::of(&PathBuf::from(&d.path)).ok().map(|x| x.sha256);
            (actual.as_deref() != Some(d.sha256.as_str())).then(|| DigestMismatch { path: d.path.clone(), expected: d.sha256.clone(), actual })
        })
        .collect()
}

/// Manifest location for a single output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verification_detects_changed_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        std::fs::write(&a, "alpha").unwrap();
        std::fs::write(&b, "beta").unwrap();
        let m = RunManifest {
            command: "test".into(),
            tool_version: "0".into(),
            seed: 0,
            config: BTreeMap::new(),
            inputs: vec![FileDigest::of(&a).unwrap()],
            outputs: vec![FileDigest::of(&b).unwrap()],
            wall_time_seconds: 0.0,
            notes: vec![],
        };
        assert!(verify(&m).is_empty());
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);

        std::fs::write(&a, "changed").unwrap();
        std::fs::remove_file(&b).unwrap();
        let bad = verify(&m);
        assert_eq!(bad.len(), 2);
        assert!(bad[0].to_string().contains("checksum mismatch"));
        assert!(bad[1].to_string().contains("not found"));
    }

    #[test]
    fn manifest_sits_next_to_its_output() {
        assert_eq!(manifest_path_for(Path::new("out/labels.jsonl")), PathBuf::from("out/labels.jsonl.manifest.json"));
    }
}
