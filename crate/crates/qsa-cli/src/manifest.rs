//! Run manifest: enough metadata to reproduce a run byte-for-byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: u64,
    pub rows: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool_version: &'static str,
    pub kind: String,
    pub master_seed: u64,
    /// FNV-1a 64 hash of the raw config bytes, hex.
    pub config_hash: String,
    /// How per-run seeds derive from the master seed.
    pub seed_derivation: &'static str,
    pub jobs: usize,
    pub outputs: Vec<OutputEntry>,
    pub wall_ms: u128,
}

pub const SEED_DERIVATION: &str =
    "per-run seed = splitmix64(master_seed ^ fnv1a64(tag) ^ run_index * 0x9E3779B97F4A7C15)";

impl Manifest {
    pub fn new(kind: &str, master_seed: u64, config_bytes: &[u8], jobs: usize) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            kind: kind.to_string(),
            master_seed,
            config_hash: format!("{:016x}", qsa::rng::fnv1a64(config_bytes)),
            seed_derivation: SEED_DERIVATION,
            jobs,
            outputs: Vec::new(),
            wall_ms: 0,
        }
    }

    pub fn record(&mut self, path: &Path, rows: Option<usize>) -> std::io::Result<()> {
        let bytes = fs::metadata(path)?.len();
        self.outputs.push(OutputEntry {
            file: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            bytes,
            rows,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(path)
    }
}
