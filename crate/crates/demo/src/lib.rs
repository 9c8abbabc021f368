//! Browser demo: render moving-blob sequences, estimate the total correlation
//! of a correlated Gaussian latent, and watch diffusion on a random graph.
//!
//! Every export is a thin wrapper over `stvae-core`; the functions are plain
//! Rust too, so the native tests exercise the same code the page calls.

use stvae_core::metrics::{decompose, Mode, PosteriorBank};
use stvae_core::rng::{self, normal_vec};
use stvae_core::stdata::{blob_center, diffuse, random_connected_graph, render_blob_frame};
use wasm_bindgen::prelude::*;

/// Latent posterior variance used for the Gaussian TC demo bank.
const COMPONENT_VAR: f64 = 0.05;
/// Components in the Gaussian TC demo bank.
const BANK_SIZE: usize = 400;

/// `t_len` frames of a blob starting at the grid centre, concatenated row-major.
#[wasm_bindgen]
pub fn blob_frames(size: usize, t_len: usize, vx: f64, vy: f64, amplitude: f64, blob_width: f64) -> Vec<f32> {
    let size = size.clamp(4, 64);
    let start = (size as f64 / 2.0, size as f64 / 2.0);
    (0..t_len)
        .flat_map(|t| {
            let c = blob_center(start, (vx, vy), t as f64, size, size);
            render_blob_frame(c, amplitude, blob_width.max(0.1), size, size)
        })
        .collect()
}

/// `[estimate, closed form]` of the total correlation of a bivariate
/// Gaussian with correlation `rho`, from a bank of posteriors whose
/// aggregate approximates it.
#[wasm_bindgen]
pub fn gaussian_tc(rho: f64, samples: usize, seed: u64) -> Vec<f64> {
    let rho = rho.clamp(-0.95, 0.95);
    let mut r = rng::stream(seed, rng::streams::EVAL);
    let noise = normal_vec(&mut r, 2 * BANK_SIZE);
    // Means carry covariance [[1 - s, rho], [rho, 1 - s]] so that adding the
    // component variance s gives unit marginals.
    let a = 1.0 - COMPONENT_VAR;
    let l11 = a.sqrt();
    let l21 = rho / l11;
    let l22 = (a - l21 * l21).max(1e-9).sqrt();
    let mu: Vec<f64> = noise.chunks(2).flat_map(|e| [l11 * e[0], l21 * e[0] + l22 * e[1]]).collect();
    let bank = PosteriorBank::from_flat(mu, vec![COMPONENT_VAR.ln(); 2 * BANK_SIZE], 2).expect("finite bank");
    let est = decompose(&bank, samples.clamp(64, 16384), Mode::FullSum, seed).expect("nonempty bank");
    vec![est.tc, -0.5 * (1.0 - rho * rho).ln()]
}

/// Mass spreading from one node of a random connected graph.
#[wasm_bindgen]
pub struct DiffusionRun {
    n_nodes: usize,
    edges: Vec<u32>,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl DiffusionRun {
    #[wasm_bindgen(constructor)]
    pub fn new(n_nodes: usize, degree: usize, alpha: f64, steps: usize, seed: u64) -> Result<DiffusionRun, JsError> {
        let n = n_nodes.clamp(2, 60);
        let adj = random_connected_graph(n, degree.clamp(1, n - 1), &mut rng::stream(seed, 0)).map_err(|e| JsError::new(&e.to_string()))?;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if adj.weight(i, j) > 0.0 || adj.weight(j, i) > 0.0 {
                    edges.extend([i as u32, j as u32]);
                }
            }
        }
        let p = adj.row_normalized();
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        let mut values = x.clone();
        for _ in 0..steps {
            x = diffuse(&p, &x, alpha.clamp(0.0, 1.0));
            values.extend_from_slice(&x);
        }
        Ok(DiffusionRun { n_nodes: n, edges, values })
    }

    #[wasm_bindgen(getter)]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Undirected edges as consecutive `(i, j)` pairs.
    #[wasm_bindgen(getter)]
    pub fn edges(&self) -> Vec<u32> {
        self.edges.clone()
    }

    /// Node values per step, `[steps + 1, n_nodes]` row-major.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}
