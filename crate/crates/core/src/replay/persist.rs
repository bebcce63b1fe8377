//! Replay-source persistence. Preserved sources inline their rows and
//! labels; generative sources inline the density parameters and reference
//! the label-model snapshot checkpoint by path and SHA-256.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ReplaySource, ReplaySourceKind};
use crate::density;
use crate::error::{Error, Result};
use crate::nn;
use crate::scalar::Scalar;

const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum KindFile {
    Preserved {
        rows: Vec<Vec<f64>>,
        labels: Vec<u32>,
    },
    Generative {
        density: serde_json::Value,
        snapshot_path: String,
        snapshot_sha256: String,
        train_size: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct SourceFile {
    version: u32,
    mission_id: u32,
    task_id: u32,
    #[serde(flatten)]
    kind: KindFile,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Serialized size in bytes of a preserved source's payload; generative
/// sources report 0 (they hold only a density model, not buffered rows).
pub fn preserved_buffer_bytes<F: Scalar>(source: &ReplaySource<F>) -> u64 {
    match &source.kind {
        ReplaySourceKind::Preserved { rows, labels } => {
            let payload = KindFile::Preserved {
                rows: rows.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
                labels: labels.clone(),
            };
            serde_json::to_vec(&payload).map(|v| v.len() as u64).unwrap_or(0)
        }
        ReplaySourceKind::Generative { .. } => 0,
    }
}

/// Writes `<stem>.json` (and `<stem>_snapshot.json` for generative sources)
/// under `dir`; returns the source file path.
pub fn save_replay_source<F: Scalar>(
    source: &ReplaySource<F>,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let kind = match &source.kind {
        ReplaySourceKind::Preserved { rows, labels } => KindFile::Preserved {
            rows: rows.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
            labels: labels.clone(),
        },
        ReplaySourceKind::Generative { density, snapshot, train_size } => {
            let snapshot_name = format!("{stem}_snapshot.json");
            nn::save_checkpoint(snapshot.as_ref(), dir.join(&snapshot_name))?;
            let bytes = std::fs::read(dir.join(&snapshot_name))?;
            KindFile::Generative {
                density: density::density_to_value(density)?,
                snapshot_path: snapshot_name,
                snapshot_sha256: sha256_hex(&bytes),
                train_size: *train_size,
            }
        }
    };
    let file = SourceFile {
        version: VERSION,
        mission_id: source.mission_id,
        task_id: source.task_id,
        kind,
    };
    let path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string(&file).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(&path, json)?;
    Ok(path)
}

/// Loads a replay source; the snapshot reference is resolved relative to the
/// source file and its hash is verified.
pub fn load_replay_source<F: Scalar>(path: impl AsRef<Path>) -> Result<ReplaySource<F>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let file: SourceFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(format!("unreadable replay source: {e}")))?;
    if file.version != VERSION {
        return Err(Error::format(format!(
            "unsupported replay source version {} (expected {VERSION})",
            file.version
        )));
    }
    let kind = match file.kind {
        KindFile::Preserved { rows, labels } => {
            let cols = rows.first().map_or(0, |r| r.len());
            let mut features = Array2::<F>::zeros((rows.len(), cols));
            for (i, row) in rows.iter().enumerate() {
                if row.len() != cols {
                    return Err(Error::format("ragged preserved rows"));
                }
                for (j, &v) in row.iter().enumerate() {
                    features[[i, j]] = F::cast(v);
                }
            }
            if labels.len() != features.nrows() {
                return Err(Error::format("preserved labels do not match rows"));
            }
            ReplaySourceKind::Preserved { rows: features, labels }
        }
        KindFile::Generative { density, snapshot_path, snapshot_sha256, train_size } => {
            let snapshot_file = path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&snapshot_path);
            if !snapshot_file.exists() {
                return Err(Error::invalid_state(format!(
                    "snapshot checkpoint '{}' referenced by the replay source is missing",
                    snapshot_file.display()
                )));
            }
            let snapshot_bytes = std::fs::read(&snapshot_file)?;
            if sha256_hex(&snapshot_bytes) != snapshot_sha256 {
                return Err(Error::format(
                    "snapshot checkpoint hash does not match the replay source reference",
                ));
            }
            let snapshot = nn::load_checkpoint::<F>(&snapshot_file)?;
            ReplaySourceKind::Generative {
                density: density::density_from_value(&density)?,
                snapshot: Arc::new(snapshot),
                train_size,
            }
        }
    };
    Ok(ReplaySource { mission_id: file.mission_id, task_id: file.task_id, kind })
}
