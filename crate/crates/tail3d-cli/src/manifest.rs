//! Run manifests: every subcommand leaves behind a record of what ran, the
//! resolved configuration, and digests of everything read and written.
//!
//! Manifests are deterministic except for `duration_ms`; reruns with the
//! same inputs and flags reproduce every digest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: &str = "tail3d/manifest/1";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    schema_version: &'static str,
    subcommand: &'static str,
    tool_version: &'static str,
    config: &'a serde_json::Value,
    inputs: &'a BTreeMap<&'static str, FileDigest>,
    outputs: &'a BTreeMap<&'static str, FileDigest>,
    duration_ms: u64,
}

pub struct ManifestBuilder {
    subcommand: &'static str,
    config: serde_json::Value,
    inputs: BTreeMap<&'static str, FileDigest>,
    outputs: BTreeMap<&'static str, FileDigest>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config = config;
    }

    pub fn add_input(&mut self, role: &'static str, path: &Path) -> std::io::Result<()> {
        self.inputs.insert(role, digest_of(path)?);
        Ok(())
    }

    /// Digest an output after it has been written.
    pub fn add_output(&mut self, role: &'static str, path: &Path) -> std::io::Result<()> {
        self.outputs.insert(role, digest_of(path)?);
        Ok(())
    }

    pub fn write(self, path: &Path) -> std::io::Result<()> {
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA,
            subcommand: self.subcommand,
            tool_version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            duration_ms: self.started.elapsed().as_millis() as u64,
        };
        let mut text =
            serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}

fn digest_of(path: &Path) -> std::io::Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("writing to a String cannot fail");
    }
    out
}
