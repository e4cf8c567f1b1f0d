//! Model file: a JSON manifest (network spec, seeds, training config) plus a
//! little-endian `f64` blob holding the parameters layer by layer, weights
//! row-major followed by the bias.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkSpec, Parameters};
use crate::artifact;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub seeds: BTreeMap<String, u64>,
    pub training: serde_json::Value,
    pub byte_order: String,
    pub element_type: String,
    pub blob: String,
    pub param_count: usize,
}

impl ModelFile {
    pub fn new(
        spec: NetworkSpec,
        seeds: BTreeMap<String, u64>,
        training: serde_json::Value,
    ) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            spec,
            seeds,
            training,
            byte_order: artifact::BYTE_ORDER.into(),
            element_type: artifact::ELEMENT_TYPE.into(),
            blob: String::new(),
            param_count: 0,
        }
    }
}

/// Write `manifest` and its `.bin` blob.
pub fn save_model(manifest: &Path, mut file: ModelFile, params: &Parameters) -> Result<()> {
    if !params.matches(&file.spec) {
        return Err(Error::ShapeMismatch(
            "parameters do not match the manifest spec".into(),
        ));
    }
    let blob = artifact::blob_path_for(manifest);
    artifact::write_f64_blob(&blob, params.flat())?;
    file.blob = blob
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.param_count = params.len();
    artifact::write_json(manifest, &file)
}

pub fn load_model(manifest: &Path) -> Result<(ModelFile, Parameters)> {
    let file: ModelFile = artifact::read_json(manifest)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::MalformedArtifact {
            path: manifest.to_path_buf(),
            reason: format!("unsupported format version {}", file.format_version),
        });
    }
    artifact::check_format(manifest, &file.byte_order, &file.element_type)?;
    file.spec.validate()?;
    let values = artifact::read_f64_blob(
        &artifact::resolve_blob(manifest, &file.blob),
        file.param_count,
    )?;
    let params = Parameters::from_flat(&file.spec, &values)?;
    Ok((file, params))
}
