//! Output directory bookkeeping and the hashed manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nehari::domain::write_fields_csv;
use nehari::{Domain, Field};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    exit_code: i32,
    files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files below a root directory and remembers their hashes.
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        let entry = ManifestEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() };
        self.files.insert(rel.to_string(), entry);
        Ok(())
    }

    pub fn write_json<S: Serialize + ?Sized>(&mut self, rel: &str, value: &S) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<(), Failure> {
        self.write(rel, text.as_bytes())
    }

    pub fn write_fields(&mut self, rel: &str, d: &Domain<f64>, columns: &[(&str, &Field<f64>)]) -> Result<(), Failure> {
        let mut buf = Vec::new();
        write_fields_csv(d, columns, &mut buf)?;
        self.write(rel, &buf)
    }

    pub fn finish(self, command: &str, seed: u64, config: &[u8], exit_code: i32) -> Result<(), Failure> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_sha256: sha256_hex(config),
            exit_code,
            files: self.files.into_values().collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.root.join(MANIFEST), bytes)?;
        Ok(())
    }
}
