use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::BestSummary;
use crate::llm::prompt::hex;
use crate::llm::GenerationStats;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const REFERENCE_FILE: &str = "reference.reward";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed record: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("run record does not match its manifest:\n{}", .0.join("\n"))]
    Integrity(Vec<String>),
}

pub fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RecordError + '_ {
    move |source| RecordError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RecordError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RecordError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| RecordError::Malformed { path: path.into(), message: e.to_string() })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, RecordError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RecordError::Malformed { path: path.into(), message: e.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub iteration: usize,
    pub status: IterationStatus,
    /// Path relative to the run directory -> sha256 of the content.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config_sha256: String,
    pub reference_sha256: Option<String>,
    pub iterations: Vec<ManifestEntry>,
    /// Final outputs, present once every iteration is recorded.
    pub final_files: Option<BTreeMap<String, String>>,
}

impl Manifest {
    pub fn new(config_sha256: String, reference_sha256: Option<String>) -> Self {
        Self { version: RECORD_VERSION, config_sha256, reference_sha256, iterations: Vec::new(), final_files: None }
    }

    pub fn load(run_dir: &Path) -> Result<Self, RecordError> {
        read_json(&run_dir.join(MANIFEST))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), RecordError> {
        write_json(&run_dir.join(MANIFEST), self)
    }

    /// Compares every recorded hash with the file on disk.
    pub fn verify(&self, run_dir: &Path) -> Result<(), RecordError> {
        let mut diff = Vec::new();
        let mut check = |rel: &str, expected: &str| match fs::read(run_dir.join(rel)) {
            Ok(bytes) => {
                let actual = sha256_hex(&bytes);
                if actual != expected {
                    diff.push(format!("  {rel}: manifest {expected}, on disk {actual}"));
                }
            }
            Err(_) => diff.push(format!("  {rel}: manifest {expected}, on disk missing")),
        };
        check(CONFIG_SNAPSHOT, &self.config_sha256);
        if let Some(h) = &self.reference_sha256 {
            check(REFERENCE_FILE, h);
        }
        for e in &self.iterations {
            for (rel, h) in &e.files {
                check(rel, h);
            }
        }
        for (rel, h) in self.final_files.iter().flatten() {
            check(rel, h);
        }
        if diff.is_empty() {
            Ok(())
        } else {
            Err(RecordError::Integrity(diff))
        }
    }
}

/// Hashes every regular file below `dir`, keyed by path relative to `root`.
pub fn hash_tree(root: &Path, dir: &Path) -> Result<BTreeMap<String, String>, RecordError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io_err(&d))? {
            let entry = entry.map_err(io_err(&d))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_none_or(|e| e != "tmp") {
                let bytes = fs::read(&p).map_err(io_err(&p))?;
                let rel = p.strip_prefix(root).expect("file below root").to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_hex(&bytes));
            }
        }
    }
    Ok(out)
}

/// Per-candidate outcome as it appears in the iteration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub index: usize,
    pub valid: bool,
    pub failure: Option<String>,
    pub train_criterion: Option<f64>,
    pub selected: bool,
    pub gazebo: Option<f64>,
    pub real: Option<f64>,
    pub safe: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub status: IterationStatus,
    pub diagnostic: Option<String>,
    pub prompt_hash: String,
    pub stats: GenerationStats,
    pub candidates: Vec<CandidateRow>,
    pub selected: Vec<usize>,
    /// This iteration's final pick.
    pub pick: Option<usize>,
    pub pick_criterion: Option<f64>,
    /// Reference after this iteration.
    pub best: Option<BestSummary>,
}

pub fn iter_dir(run_dir: &Path, iteration: usize) -> PathBuf {
    run_dir.join(format!("iter_{iteration:03}"))
}

pub fn cand_name(k: usize) -> String {
    format!("cand_{k:02}")
}
