//! Random-walk diffusion of a point mass on a random graph.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Adjacency, DataError, FactorTable, GraphSequence};
use crate::rng::{self, StdRng};

/// Attempts at drawing a connected graph before giving up.
pub const MAX_GRAPH_RETRIES: usize = 100;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GraphGenConfig {
    pub n_nodes: usize,
    pub t_len: usize,
    pub n_samples: usize,
    /// Random links drawn per node before symmetrization.
    pub degree: usize,
    /// Number of contiguous node groups the source is drawn from.
    pub source_groups: usize,
    pub diffusion_rate: Vec<f64>,
    pub initial_mass: Vec<f64>,
}

impl Default for GraphGenConfig {
    fn default() -> Self {
        Self {
            n_nodes: 12,
            t_len: 11,
            n_samples: 512,
            degree: 2,
            source_groups: 4,
            diffusion_rate: vec![0.2, 0.5, 0.8],
            initial_mass: vec![0.5, 1.0],
        }
    }
}

impl GraphGenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.n_nodes < 4 {
            return bad(format!("n_nodes must be >= 4, got {}", self.n_nodes));
        }
        if self.t_len < 4 || self.n_samples == 0 {
            return bad("t_len must be >= 4 and n_samples >= 1".into());
        }
        if self.degree == 0 || self.degree >= self.n_nodes {
            return bad(format!("degree must be in 1..{}, got {}", self.n_nodes, self.degree));
        }
        if self.source_groups < 2 || self.source_groups > self.n_nodes {
            return bad(format!("source_groups must be in 2..={}", self.n_nodes));
        }
        if self.diffusion_rate.len() < 2 || self.initial_mass.len() < 2 {
            return bad("factor grids need >= 2 levels".into());
        }
        if self.diffusion_rate.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("diffusion_rate levels must lie in [0, 1]".into());
        }
        if self.initial_mass.iter().any(|m| !m.is_finite()) {
            return bad("initial_mass levels must be finite".into());
        }
        Ok(())
    }

    pub fn factor_names() -> Vec<String> {
        ["source_group", "diffusion_rate", "initial_mass"].map(String::from).to_vec()
    }

    /// Node range of group `g` when nodes are split into near-equal contiguous blocks.
    pub fn group_nodes(&self, g: usize) -> std::ops::Range<usize> {
        let (n, k) = (self.n_nodes, self.source_groups);
        (g * n / k)..((g + 1) * n / k)
    }
}

/// Symmetric unit-weight graph where each node links to `degree` random others,
/// redrawn until connected.
pub fn random_connected_graph(n: usize, degree: usize, rng: &mut StdRng) -> Result<Adjacency, DataError> {
    if n < 2 || degree == 0 || degree >= n {
        return Err(DataError::InvalidConfig(format!("cannot draw degree-{degree} graph on {n} nodes")));
    }
    for _ in 0..MAX_GRAPH_RETRIES {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in sample(rng, n - 1, degree) {
                let j = if j >= i { j + 1 } else { j };
                w[i * n + j] = 1.0;
                w[j * n + i] = 1.0;
            }
        }
        let adj = Adjacency::new(n, w, false)?;
        if adj.is_connected() {
            return Ok(adj);
        }
    }
    Err(DataError::Disconnected(MAX_GRAPH_RETRIES))
}

/// One step `x' = (1 - alpha) x + alpha P x` with `p` a row-major `n x n` operator.
pub fn diffuse(p: &[f64], x: &[f64], alpha: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let px: f64 = p[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
            (1.0 - alpha) * x[i] + alpha * px
        })
        .collect()
}

/// Generates diffusion sequences on one shared random graph (single feature per node).
pub fn generate_graph_diffusion(config: &GraphGenConfig, seed: u64) -> Result<(Vec<GraphSequence>, FactorTable), DataError> {
    config.validate()?;
    let n = config.n_nodes;
    let mut rng = rng::stream(seed, 0);
    let adjacency = Arc::new(random_connected_graph(n, config.degree, &mut rng)?);
    let node_ids = Arc::new((0..n).map(|i| format!("n{i}")).collect::<Vec<_>>());
    let p = adjacency.row_normalized();
    let levels = vec![config.source_groups, config.diffusion_rate.len(), config.initial_mass.len()];
    let mut factors = FactorTable::new(GraphGenConfig::factor_names(), levels.clone());
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let row: Vec<usize> = levels.iter().map(|&k| rng.random_range(0..k)).collect();
        let source = rng.random_range(config.group_nodes(row[0]));
        let alpha = config.diffusion_rate[row[1]];
        let mut x = vec![0.0; n];
        x[source] = config.initial_mass[row[2]];
        let mut values = Vec::with_capacity(config.t_len * n);
        for t in 0..config.t_len {
            if t > 0 {
                x = diffuse(&p, &x, alpha);
            }
            values.extend(x.iter().map(|&v| v as f32));
        }
        samples.push(GraphSequence::new(config.t_len, 1, values, Arc::clone(&adjacency), Arc::clone(&node_ids))?);
        factors.push(row);
    }
    Ok((samples, factors))
}
