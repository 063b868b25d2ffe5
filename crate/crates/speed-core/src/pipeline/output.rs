//! Binary window store: `windows.bin` plus `index.json`.
//!
//! Samples are little-endian 32-bit floats, channel-major within each
//! window (all of channel 0, then channel 1, ...), windows concatenated in
//! manifest order. The manifest pins the channel order, shapes, offsets,
//! provenance, a config snapshot, and a SHA-256 over the data bytes.

use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("windows disagree in shape: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 2], [usize; 2]),
    #[error("manifest checksum {expected} does not match data {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}

/// A fully processed window ready for the store.
#[derive(Debug, Clone)]
pub struct ProcessedWindow<S> {
    pub recording_id: String,
    pub window_index: Option<usize>,
    pub data: Array2<S>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowEntry {
    pub recording_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub window_index: Option<usize>,
    /// Byte offset into windows.bin.
    pub offset: u64,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputManifest {
    pub format_version: u32,
    pub channel_order: Vec<String>,
    pub fs: f64,
    /// Present when every window has the same shape (pretraining output).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub window_shape: Option<[usize; 2]>,
    pub windows: Vec<WindowEntry>,
    pub config: serde_json::Value,
    pub checksum_sha256: String,
}

pub const FORMAT_VERSION: u32 = 1;

/// Writes `windows.bin` and `index.json` into `dir` in the given order.
pub fn write_output<S: Scalar>(
    windows: &[ProcessedWindow<S>],
    dir: &Path,
    channel_order: &[String],
    fs: f64,
    config_snapshot: serde_json::Value,
) -> Result<OutputManifest, OutputError> {
    std::fs::create_dir_all(dir)?;
    let bin_path = dir.join("windows.bin");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&bin_path)?);
    let mut hasher = Sha256::new();
    let mut entries = Vec::with_capacity(windows.len());
    let mut offset = 0u64;
    for w in windows {
        let shape = [w.data.nrows(), w.data.ncols()];
        entries.push(WindowEntry {
            recording_id: w.recording_id.clone(),
            window_index: w.window_index,
            offset,
            shape,
        });
        for row in w.data.rows() {
            for v in row.iter() {
                let bytes = (v.to_f64_c() as f32).to_le_bytes();
                file.write_all(&bytes)?;
                hasher.update(bytes);
                offset += 4;
            }
        }
    }
    file.flush()?;

    let uniform = entries
        .windows(2)
        .all(|pair| pair[0].shape == pair[1].shape);
    let window_shape = if uniform {
        entries.first().map(|e| e.shape)
    } else {
        None
    };
    let manifest = OutputManifest {
        format_version: FORMAT_VERSION,
        channel_order: channel_order.to_vec(),
        fs,
        window_shape,
        windows: entries,
        config: config_snapshot,
        checksum_sha256: hex_digest(hasher),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| OutputError::MalformedManifest(e.to_string()))?;
    std::fs::write(dir.join("index.json"), json)?;
    Ok(manifest)
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<OutputManifest, OutputError> {
    let text = std::fs::read_to_string(dir.join("index.json"))?;
    serde_json::from_str(&text).map_err(|e| OutputError::MalformedManifest(e.to_string()))
}

/// Reads window `k` back as f32, verifying nothing but the shape.
pub fn read_window(dir: &Path, manifest: &OutputManifest, k: usize) -> Result<Array2<f32>, OutputError> {
    let entry = &manifest.windows[k];
    let [c, n] = entry.shape;
    let mut file = std::fs::File::open(dir.join("windows.bin"))?;
    file.seek(SeekFrom::Start(entry.offset))?;
    let mut bytes = vec![0u8; c * n * 4];
    file.read_exact(&mut bytes)?;
    let mut data = Array2::<f32>::zeros((c, n));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        data[[i / n, i % n]] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    Ok(data)
}

/// Recomputes the SHA-256 of windows.bin and compares to the manifest.
pub fn verify_checksum(dir: &Path, manifest: &OutputManifest) -> Result<(), OutputError> {
    let mut file = std::fs::File::open(dir.join("windows.bin"))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let actual = hex_digest(hasher);
    if actual != manifest.checksum_sha256 {
        return Err(OutputError::ChecksumMismatch {
            expected: manifest.checksum_sha256.clone(),
            actual,
        });
    }
    Ok(())
}
