//! Persistence: CSV emitters with a fixed column contract, the binary
//! snapshot store, and the run manifest with per-file checksums.
//!
//! Snapshot layout (bit-exact contract): a `u64` little-endian sample count
//! followed by that many `f64` little-endian samples. Grid metadata and the
//! snapshot index live in a JSON sidecar (`snapshots.json`).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;
use tidal_kdv_core::diagnostics::{ConvergenceReport, EnergyReport, TailReport};
use tidal_kdv_core::spectral_grid::{Field, Grid};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("snapshot length {got} does not match grid n = {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("checksum mismatch for {path}")]
    ChecksumMismatch { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

/// 17-significant-digit round-trip rendering used in every CSV cell.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `rows` under the exact `header`, returning the path for the manifest.
pub fn emit_csv(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), OutputError> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Columns exactly `t,e0,e1,e2,p_full`.
pub fn emit_energy_csv(path: &Path, reports: &[EnergyReport]) -> Result<(), OutputError> {
    emit_csv(
        path,
        "t,e0,e1,e2,p_full",
        reports.iter().map(|r| {
            vec![
                fmt_float(r.time),
                fmt_float(r.e0),
                fmt_float(r.e1),
                fmt_float(r.e2),
                fmt_float(r.p_full),
            ]
        }),
    )
}

/// Long-form columns exactly `kappa_a,kappa_b,sup_h_minus2,sup_hs`.
pub fn emit_convergence_csv(path: &Path, report: &ConvergenceReport) -> Result<(), OutputError> {
    let m = report.kappa_list.len();
    let mut rows = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            rows.push(vec![
                fmt_float(report.kappa_list[a]),
                fmt_float(report.kappa_list[b]),
                fmt_float(report.pairwise_h_minus2[a][b]),
                fmt_float(report.strong_hs[a][b]),
            ]);
        }
    }
    emit_csv(path, "kappa_a,kappa_b,sup_h_minus2,sup_hs", rows)
}

/// Columns `n,t,tail_h_s`.
pub fn emit_tail_csv(path: &Path, report: &TailReport) -> Result<(), OutputError> {
    let mut rows = Vec::new();
    for (i, &n) in report.n_list.iter().enumerate() {
        for (j, &t) in report.times.iter().enumerate() {
            rows.push(vec![fmt_float(n), fmt_float(t), fmt_float(report.tail_norms[i][j])]);
        }
    }
    emit_csv(path, "n,t,tail_h_s", rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub time: f64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotIndex {
    pub grid_n: usize,
    pub grid_l: f64,
    pub snapshots: Vec<SnapshotRecord>,
}

/// Flat binary snapshots plus a JSON sidecar index.
#[derive(Debug)]
pub struct SnapshotStore {
    dir: PathBuf,
    index: SnapshotIndex,
}

impl SnapshotStore {
    pub fn create(dir: &Path, grid: Grid) -> Result<Self, OutputError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(SnapshotStore {
            dir: dir.to_path_buf(),
            index: SnapshotIndex {
                grid_n: grid.num_points(),
                grid_l: grid.half_length(),
                snapshots: Vec::new(),
            },
        })
    }

    pub fn push(&mut self, time: f64, field: &Field) -> Result<(), OutputError> {
        let samples = field.samples();
        if samples.len() != self.index.grid_n {
            return Err(OutputError::LengthMismatch {
                got: samples.len(),
                expected: self.index.grid_n,
            });
        }
        let name = format!("snap_{:05}.bin", self.index.snapshots.len());
        let path = self.dir.join(&name);
        let mut bytes = Vec::with_capacity(8 + 8 * samples.len());
        bytes.extend_from_slice(&(samples.len() as u64).to_le_bytes());
        for v in samples {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(&bytes).map_err(io_err(&path))?;
        self.index.snapshots.push(SnapshotRecord { time, file: name });
        Ok(())
    }

    /// Write the sidecar and return the paths of every file in the store.
    pub fn finalize(&self) -> Result<Vec<PathBuf>, OutputError> {
        let sidecar = self.dir.join("snapshots.json");
        let json = serde_json::to_string_pretty(&self.index)?;
        fs::write(&sidecar, json).map_err(io_err(&sidecar))?;
        let mut files: Vec<PathBuf> = self
            .index
            .snapshots
            .iter()
            .map(|r| self.dir.join(&r.file))
            .collect();
        files.push(sidecar);
        Ok(files)
    }

    /// Read one snapshot back (for tests and downstream tooling).
    pub fn read(dir: &Path, record: &SnapshotRecord) -> Result<Vec<f64>, OutputError> {
        let path = dir.join(&record.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let count = u64::from_le_bytes(bytes[0..8].try_into().expect("length prefix")) as usize;
        if bytes.len() != 8 + 8 * count {
            return Err(OutputError::LengthMismatch { got: bytes.len(), expected: 8 + 8 * count });
        }
        Ok(bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn load_index(dir: &Path) -> Result<SnapshotIndex, OutputError> {
        let path = dir.join("snapshots.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One executed assertion with its measured value and threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: String,
    pub code_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub wrap_time: Option<f64>,
    pub divergence: Option<String>,
    pub files: Vec<FileRecord>,
    pub assertions: Vec<AssertionRecord>,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Checksum and register an emitted file.
    pub fn add_file(&mut self, root: &Path, path: &Path) -> Result<(), OutputError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.files.push(FileRecord {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Re-read every listed file and verify its checksum.
    pub fn verify_checksums(&self, root: &Path) -> Result<(), OutputError> {
        for record in &self.files {
            let path = root.join(&record.path);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if sha256_hex(&bytes) != record.sha256 {
                return Err(OutputError::ChecksumMismatch { path });
            }
        }
        Ok(())
    }

    pub fn write(&self, root: &Path) -> Result<PathBuf, OutputError> {
        let path = root.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json).map_err(io_err(&path))?;
        Ok(path)
    }
}
