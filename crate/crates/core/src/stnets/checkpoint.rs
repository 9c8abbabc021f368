//! Parameter checkpoints: `meta.json` listing the tensors, one `f32le` file
//! per tensor, and `spec.json` describing the model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::params::ParameterSet;
use crate::stdata::container::{read_f32le, read_header, write_f32le, write_json};
use crate::stdata::{ContainerError, FORMAT_VERSION};
use crate::Tensor;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    format_version: u64,
    kind: String,
    dtype: String,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

/// Writes `params` (rounded to 32-bit floats) and `spec` under `dir`.
pub fn save_checkpoint(params: &ParameterSet, spec: &impl Serialize, dir: &Path) -> Result<(), ContainerError> {
    fs::create_dir_all(dir).map_err(|source| ContainerError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        let file = format!("{name}.bin");
        write_f32le(&dir.join(&file), t.data().iter().map(|&v| v as f32))?;
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            file,
        });
    }
    write_json(
        &dir.join("meta.json"),
        &CheckpointMeta {
            format_version: FORMAT_VERSION,
            kind: "parameters".into(),
            dtype: "f32le".into(),
            seed: params.seed,
            tensors,
        },
    )?;
    write_json(&dir.join("spec.json"), spec)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParameterSet, serde_json::Value), ContainerError> {
    let meta: CheckpointMeta = read_header(&dir.join("meta.json"))?;
    if meta.kind != "parameters" || meta.dtype != "f32le" {
        return Err(ContainerError::MalformedHeader(format!(
            "expected f32le parameters, found {} {}",
            meta.dtype, meta.kind
        )));
    }
    let mut ps = ParameterSet::new(meta.seed);
    for e in meta.tensors {
        if e.file.contains(['/', '\\']) || e.file.starts_with("..") {
            return Err(ContainerError::MalformedHeader(format!("tensor file {:?} escapes the checkpoint", e.file)));
        }
        let n: usize = e.shape.iter().product();
        let data = read_f32le(&dir.join(&e.file), n)?;
        ps.insert(e.name, Tensor::new(e.shape, data.into_iter().map(f64::from).collect()));
    }
    let spec_path = dir.join("spec.json");
    let text = fs::read_to_string(&spec_path).map_err(|source| ContainerError::Io {
        path: spec_path.display().to_string(),
        source,
    })?;
    let spec = serde_json::from_str(&text).map_err(|e| ContainerError::MalformedHeader(format!("spec.json: {e}")))?;
    Ok((ps, spec))
}
