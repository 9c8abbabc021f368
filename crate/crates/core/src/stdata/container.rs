//! Directory container: `meta.json`, `data.bin`, `factors.csv`, and for graphs
//! `adjacency.bin` plus `nodes.json`.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Adjacency, DataError, Dataset, FactorTable, GraphSequence, RasterSequence, Samples};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("{file}: header declares {expected} values but payload holds {found_bytes} bytes")]
    SizeMismatch { file: String, expected: usize, found_bytes: usize },
    #[error("unknown format version {0}")]
    UnknownVersion(u64),
    #[error("malformed factor table: {0}")]
    MalformedFactors(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl ContainerError {
    /// Stable machine-readable code per failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::MalformedHeader(_) => "malformed_header",
            Self::SizeMismatch { .. } => "size_mismatch",
            Self::UnknownVersion(_) => "unknown_version",
            Self::MalformedFactors(_) => "malformed_factors",
            Self::Data(_) => "invalid_data",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u64,
    kind: String,
    shape: Vec<usize>,
    dtype: String,
    n_samples: usize,
    /// Level counts per factor; inferred from the rows when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factor_levels: Option<Vec<usize>>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ContainerError + '_ {
    move |source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn encode_f32le(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub(crate) fn write_f32le(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<(), ContainerError> {
    fs::write(path, encode_f32le(values)).map_err(io_err(path))
}

/// Reads exactly `expected` little-endian floats from `path`.
pub(crate) fn read_f32le(path: &Path, expected: usize) -> Result<Vec<f32>, ContainerError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected * 4 {
        return Err(ContainerError::SizeMismatch {
            file: path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
            expected,
            found_bytes: bytes.len(),
        });
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

/// Parses a JSON header, checking `format_version` before anything else.
pub(crate) fn read_header<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ContainerError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| ContainerError::MalformedHeader(e.to_string()))?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(ContainerError::UnknownVersion(v)),
        None => return Err(ContainerError::MalformedHeader("missing integer format_version".into())),
    }
    serde_json::from_value(raw).map_err(|e| ContainerError::MalformedHeader(e.to_string()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ContainerError> {
    let text = serde_json::to_string_pretty(value).expect("header serializes");
    fs::write(path, text).map_err(io_err(path))
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<(), ContainerError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let n = dataset.len();
    let (kind, shape) = match &dataset.samples {
        Samples::Raster(s) => {
            let first = s.first().ok_or_else(|| ContainerError::MalformedHeader("empty dataset".into()))?;
            if s.iter().any(|r| r.shape() != first.shape()) {
                return Err(DataError::InvalidShape("raster samples differ in shape".into()).into());
            }
            write_f32le(&dir.join("data.bin"), s.iter().flat_map(|r| r.values().iter().copied()))?;
            ("raster", [&[n][..], &first.shape()].concat())
        }
        Samples::Graph(s) => {
            let first = s.first().ok_or_else(|| ContainerError::MalformedHeader("empty dataset".into()))?;
            if s.iter().any(|g| g.shape() != first.shape() || g.adjacency != first.adjacency) {
                return Err(DataError::InvalidShape("graph samples differ in shape or adjacency".into()).into());
            }
            write_f32le(&dir.join("data.bin"), s.iter().flat_map(|g| g.values().iter().copied()))?;
            write_f32le(&dir.join("adjacency.bin"), first.adjacency.weights().iter().map(|&w| w as f32))?;
            write_json(&dir.join("nodes.json"), &*first.node_ids)?;
            ("graph", [&[n][..], &first.shape()].concat())
        }
    };
    write_json(
        &dir.join("meta.json"),
        &Meta {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            shape,
            dtype: "f32le".into(),
            n_samples: n,
            factor_levels: Some(dataset.factors.levels().to_vec()),
        },
    )?;
    let mut w = csv::Writer::from_path(dir.join("factors.csv")).map_err(csv_err)?;
    w.write_record(dataset.factors.names()).map_err(csv_err)?;
    for row in dataset.factors.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> ContainerError {
    ContainerError::MalformedFactors(e.to_string())
}

fn read_factors(path: &Path, levels: Option<Vec<usize>>, n: usize) -> Result<FactorTable, ContainerError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let names: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::with_capacity(n);
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ContainerError::MalformedFactors(e.to_string()))?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(ContainerError::MalformedFactors(format!("{} factor rows for {n} samples", rows.len())));
    }
    match levels {
        Some(levels) => {
            if levels.len() != names.len() {
                return Err(ContainerError::MalformedFactors("factor_levels length differs from header".into()));
            }
            let mut t = FactorTable::new(names, levels);
            for row in rows {
                if row.len() != t.levels().len() || row.iter().zip(t.levels()).any(|(v, k)| v >= k) {
                    return Err(ContainerError::MalformedFactors(format!("row {row:?} out of range")));
                }
                t.push(row);
            }
            Ok(t)
        }
        None => Ok(FactorTable::from_rows(names, rows)?),
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, ContainerError> {
    let meta: Meta = read_header(&dir.join("meta.json"))?;
    if meta.dtype != "f32le" {
        return Err(ContainerError::MalformedHeader(format!("unsupported dtype {:?}", meta.dtype)));
    }
    if meta.shape.first() != Some(&meta.n_samples) {
        return Err(ContainerError::MalformedHeader("shape must lead with n_samples".into()));
    }
    let n = meta.n_samples;
    let per: usize = meta.shape[1..].iter().product();
    let samples = match (meta.kind.as_str(), &meta.shape[1..]) {
        ("raster", &[t, c, h, w]) => {
            let data = read_f32le(&dir.join("data.bin"), n * per)?;
            Samples::Raster(
                data.chunks_exact(per.max(1))
                    .map(|chunk| RasterSequence::new(t, c, h, w, chunk.to_vec()))
                    .collect::<Result<_, _>>()?,
            )
        }
        ("graph", &[t, nodes, f]) => {
            let data = read_f32le(&dir.join("data.bin"), n * per)?;
            let adj = read_f32le(&dir.join("adjacency.bin"), nodes * nodes)?;
            let diag_nonzero = (0..nodes).any(|i| adj[i * nodes + i] != 0.0);
            let adjacency = Arc::new(Adjacency::new(nodes, adj.into_iter().map(f64::from).collect(), diag_nonzero)?);
            let ids_path = dir.join("nodes.json");
            let ids_text = fs::read_to_string(&ids_path).map_err(io_err(&ids_path))?;
            let ids: Vec<String> =
                serde_json::from_str(&ids_text).map_err(|e| ContainerError::MalformedHeader(format!("nodes.json: {e}")))?;
            let ids = Arc::new(ids);
            Samples::Graph(
                data.chunks_exact(per.max(1))
                    .map(|chunk| GraphSequence::new(t, f, chunk.to_vec(), Arc::clone(&adjacency), Arc::clone(&ids)))
                    .collect::<Result<_, _>>()?,
            )
        }
        (kind, dims) => {
            return Err(ContainerError::MalformedHeader(format!("kind {kind:?} with per-sample shape {dims:?}")));
        }
    };
    let factors = read_factors(&dir.join("factors.csv"), meta.factor_levels, n)?;
    Ok(Dataset { samples, factors })
}
