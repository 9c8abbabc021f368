//! Spatio-temporal samples, synthetic generators with known factors, transforms,
//! and the on-disk dataset container.

mod blobs;
pub(crate) mod container;
mod diffusion;
mod split;
mod transform;

use std::sync::Arc;

use thiserror::Error;

pub use blobs::{blob_center, generate_moving_blobs, render_blob_frame, RasterGenConfig};
pub use container::{load_dataset, save_dataset, ContainerError, FORMAT_VERSION};
pub use diffusion::{diffuse, generate_graph_diffusion, random_connected_graph, GraphGenConfig, MAX_GRAPH_RETRIES};
pub use split::DatasetSplit;
pub use transform::{channels_to_time, denormalize, normalize_minmax, time_to_channels, ScaleRecord, Signal};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("no connected graph found after {0} attempts")]
    Disconnected(usize),
    #[error("constant signal (min = max = {0}) cannot be min-max normalized")]
    ConstantSignal(f64),
    #[error("non-finite value in signal")]
    NonFinite,
}

/// A gridded signal indexed `[t, c, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterSequence {
    values: Vec<f32>,
    pub t_len: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Duration of one time step, in abstract ticks.
    pub dt: f64,
}

impl RasterSequence {
    pub fn new(t_len: usize, channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self, DataError> {
        if t_len == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(DataError::InvalidShape(format!(
                "raster dimensions must be >= 1, got [{t_len}, {channels}, {height}, {width}]"
            )));
        }
        if values.len() != t_len * channels * height * width {
            return Err(DataError::InvalidShape(format!(
                "{} values for shape [{t_len}, {channels}, {height}, {width}]",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(Self {
            values,
            t_len,
            channels,
            height,
            width,
            dt: 1.0,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.t_len, self.channels, self.height, self.width]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, t: usize, c: usize, h: usize, w: usize) -> f32 {
        self.values[((t * self.channels + c) * self.height + h) * self.width + w]
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Frames `start..start+len` as a new sequence.
    pub fn frames(&self, start: usize, len: usize) -> RasterSequence {
        let f = self.frame_len();
        RasterSequence {
            values: self.values[start * f..(start + len) * f].to_vec(),
            t_len: len,
            dt: self.dt,
            ..*self
        }
    }
}

/// Non-negative weighted adjacency of a fixed graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    n: usize,
    weights: Vec<f64>,
    self_loops: bool,
}

impl Adjacency {
    /// Validates squareness, non-negativity and (unless `self_loops`) a zero diagonal.
    pub fn new(n: usize, weights: Vec<f64>, self_loops: bool) -> Result<Self, DataError> {
        if n == 0 || weights.len() != n * n {
            return Err(DataError::InvalidShape(format!("adjacency of {} entries is not {n}x{n}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DataError::InvalidShape("adjacency entries must be finite and >= 0".into()));
        }
        if !self_loops && (0..n).any(|i| weights[i * n + i] != 0.0) {
            return Err(DataError::InvalidShape("nonzero diagonal without self-loops".into()));
        }
        Ok(Self { n, weights, self_loops })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// `D^-1 W`; rows with zero degree become zero rows.
    pub fn row_normalized(&self) -> Vec<f64> {
        let n = self.n;
        let mut p = self.weights.clone();
        for i in 0..n {
            let deg: f64 = p[i * n..(i + 1) * n].iter().sum();
            for v in &mut p[i * n..(i + 1) * n] {
                *v = if deg > 0.0 { *v / deg } else { 0.0 };
            }
        }
        p
    }

    pub fn transposed(&self) -> Adjacency {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[j * n + i] = self.weights[i * n + j];
            }
        }
        Adjacency {
            n,
            weights: w,
            self_loops: self.self_loops,
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n;
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && (self.weight(i, j) > 0.0 || self.weight(j, i) > 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Node signals indexed `[t, n, f]` on a shared graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSequence {
    values: Vec<f32>,
    pub t_len: usize,
    pub n_nodes: usize,
    pub features: usize,
    pub adjacency: Arc<Adjacency>,
    pub node_ids: Arc<Vec<String>>,
}

impl GraphSequence {
    pub fn new(
        t_len: usize,
        features: usize,
        values: Vec<f32>,
        adjacency: Arc<Adjacency>,
        node_ids: Arc<Vec<String>>,
    ) -> Result<Self, DataError> {
        let n = adjacency.n();
        if t_len == 0 || features == 0 {
            return Err(DataError::InvalidShape("graph sequence dimensions must be >= 1".into()));
        }
        if values.len() != t_len * n * features {
            return Err(DataError::InvalidShape(format!("{} values for shape [{t_len}, {n}, {features}]", values.len())));
        }
        if node_ids.len() != n {
            return Err(DataError::InvalidShape(format!("{} node ids for {n} nodes", node_ids.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(Self {
            values,
            t_len,
            n_nodes: n,
            features,
            adjacency,
            node_ids,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.t_len, self.n_nodes, self.features]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, t: usize, n: usize, f: usize) -> f32 {
        self.values[(t * self.n_nodes + n) * self.features + f]
    }

    pub fn frame_len(&self) -> usize {
        self.n_nodes * self.features
    }

    pub fn frames(&self, start: usize, len: usize) -> GraphSequence {
        let f = self.frame_len();
        GraphSequence {
            values: self.values[start * f..(start + len) * f].to_vec(),
            t_len: len,
            n_nodes: self.n_nodes,
            features: self.features,
            adjacency: Arc::clone(&self.adjacency),
            node_ids: Arc::clone(&self.node_ids),
        }
    }
}

/// Ground-truth discrete factors, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorTable {
    names: Vec<String>,
    levels: Vec<usize>,
    rows: Vec<Vec<usize>>,
}

impl FactorTable {
    pub fn new(names: Vec<String>, levels: Vec<usize>) -> Self {
        assert_eq!(names.len(), levels.len());
        Self {
            names,
            levels,
            rows: Vec::new(),
        }
    }

    /// Table whose level counts are inferred from the data (`max + 1`, at least 2).
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<usize>>) -> Result<Self, DataError> {
        let k = names.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(DataError::InvalidShape(format!("factor rows must have {k} columns")));
        }
        let levels = (0..k).map(|j| rows.iter().map(|r| r[j] + 1).max().unwrap_or(0).max(2)).collect();
        Ok(Self { names, levels, rows })
    }

    pub fn push(&mut self, row: Vec<usize>) {
        assert_eq!(row.len(), self.names.len());
        for (v, k) in row.iter().zip(&self.levels) {
            assert!(v < k, "factor level {v} out of range {k}");
        }
        self.rows.push(row);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<usize> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn subset(&self, indices: &[usize]) -> FactorTable {
        FactorTable {
            names: self.names.clone(),
            levels: self.levels.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Samples {
    Raster(Vec<RasterSequence>),
    Graph(Vec<GraphSequence>),
}

/// Samples plus their ground-truth factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Samples,
    pub factors: FactorTable,
}

impl Dataset {
    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Raster(s) => s.len(),
            Samples::Graph(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self.samples {
            Samples::Raster(_) => "raster",
            Samples::Graph(_) => "graph",
        }
    }

    pub fn t_len(&self) -> usize {
        match &self.samples {
            Samples::Raster(s) => s.first().map_or(0, |s| s.t_len),
            Samples::Graph(s) => s.first().map_or(0, |s| s.t_len),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let samples = match &self.samples {
            Samples::Raster(s) => Samples::Raster(indices.iter().map(|&i| s[i].clone()).collect()),
            Samples::Graph(s) => Samples::Graph(indices.iter().map(|&i| s[i].clone()).collect()),
        };
        Dataset {
            samples,
            factors: self.factors.subset(indices),
        }
    }
}
