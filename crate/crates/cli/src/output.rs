//! JSON documents, manifests and input digests.
//!
//! Every JSON payload is wrapped as `{"artifact_version", "kind", "payload"}`
//! and carries no clock data, so equal inputs give byte-equal files. Each
//! command also writes `<output>.manifest.json` beside its primary output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Failure};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize, Deserialize)]
pub struct Document<T> {
    pub artifact_version: String,
    pub kind: String,
    pub payload: T,
}

pub fn to_json<T: Serialize>(kind: &str, payload: &T) -> CliResult<String> {
    let doc = Document {
        artifact_version: ARTIFACT_VERSION.to_string(),
        kind: kind.to_string(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::numerical(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, payload: &T) -> CliResult<()> {
    write_text(path, &to_json(kind, payload)?)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

/// Reads a document of the expected kind and returns its payload.
pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let doc: Document<serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("{}: not a capscale document: {e}", path.display())))?;
    if doc.kind != kind {
        return Err(Failure::validation(format!(
            "{}: expected a `{kind}` document, found `{}`",
            path.display(),
            doc.kind
        )));
    }
    serde_json::from_value(doc.payload).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every flag after defaults and environment fallbacks are applied.
    pub flags: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub artifact_version: String,
    /// RFC 3339 UTC; omitted under `--no-timestamp`.
    pub timestamp: Option<String>,
    /// Free-form notes such as metric conventions.
    pub notes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new<F: Serialize>(command: &str, flags: &F, seed: Option<u64>, timestamp: bool) -> CliResult<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            flags: serde_json::to_value(flags).map_err(|e| Failure::validation(e.to_string()))?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            artifact_version: ARTIFACT_VERSION.to_string(),
            timestamp: timestamp.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            notes: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_beside(&self, primary: &Path) -> CliResult<PathBuf> {
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Failure::numerical(e.to_string()))?;
        text.push('\n');
        write_text(&path, &text)?;
        Ok(path)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
