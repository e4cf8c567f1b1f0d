//! Little-endian `f64` blobs paired with JSON manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const BYTE_ORDER: &str = "little-endian";
pub const ELEMENT_TYPE: &str = "f64";

pub fn write_f64_blob(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_f64_blob(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(expected_len * 8);
    BufReader::new(f)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected_len * 8 {
        return Err(Error::MalformedArtifact {
            path: path.to_path_buf(),
            reason: format!("expected {} bytes, found {}", expected_len * 8, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Blob path stored next to a manifest: `x.json` -> `x.bin`.
pub fn blob_path_for(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Resolve a blob file name recorded in a manifest relative to the manifest.
pub fn resolve_blob(manifest: &Path, blob: &str) -> PathBuf {
    match manifest.parent() {
        Some(dir) => dir.join(blob),
        None => PathBuf::from(blob),
    }
}

pub fn check_format(path: &Path, byte_order: &str, element_type: &str) -> Result<()> {
    if byte_order != BYTE_ORDER || element_type != ELEMENT_TYPE {
        return Err(Error::MalformedArtifact {
            path: path.to_path_buf(),
            reason: format!("unsupported encoding {byte_order}/{element_type}"),
        });
    }
    Ok(())
}
