//! Encoder/decoder families for raster and graph sequences, the latent
//! bottleneck, the downstream predictor, and the density-ratio discriminator.
//!
//! Batches are dense tensors: rasters are `[B, T, C, H, W]`, graph signals
//! are `[B, T, N, F]`. Every model reads its weights from a bound
//! [`ParameterSet`], so the same code serves training, evaluation and gradient checks.

mod checkpoint;
pub mod convlstm;
pub mod dcrnn;
pub mod discriminator;
pub mod imageconv;
pub mod layers;
pub mod mlp;
pub mod stgcn;
pub mod stresnet;

use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Graph, Var};
use crate::params::{Bound, ParameterSet};
use crate::rng::{self, streams};
use crate::stdata::{Adjacency, GraphSequence, RasterSequence};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use stresnet::StLags;

/// Bound on the log-variance head.
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("encoder {kind:?} cannot consume {data} data")]
    KindMismatch { kind: EncoderKind, data: &'static str },
    #[error("sequence of length {t_len} too short: {reason}")]
    SequenceTooShort { t_len: usize, reason: String },
    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),
    #[error("graph encoders need an adjacency")]
    MissingAdjacency,
    #[error(transparent)]
    Checkpoint(#[from] crate::stdata::ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[serde(rename = "convlstm")]
    ConvLstm,
    #[serde(rename = "stresnet")]
    StResNet,
    Stgcn,
    Dcrnn,
    /// Frames folded into channels and treated as one image.
    ImageConv,
}

impl EncoderKind {
    pub fn is_graph(self) -> bool {
        matches!(self, EncoderKind::Stgcn | EncoderKind::Dcrnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::ConvLstm => "convlstm",
            EncoderKind::StResNet => "stresnet",
            EncoderKind::Stgcn => "stgcn",
            EncoderKind::Dcrnn => "dcrnn",
            EncoderKind::ImageConv => "image_conv",
        }
    }
}

fn default_latent() -> usize {
    10
}
fn default_hidden() -> usize {
    8
}
fn default_kernel() -> usize {
    3
}
fn default_residual() -> usize {
    1
}
fn default_cheb() -> usize {
    3
}
fn default_temporal_kernel() -> usize {
    2
}
fn default_diffusion() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
    /// Channel width of every hidden feature map or node embedding.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    /// Fragment lags; chosen from the sequence length when absent.
    #[serde(default)]
    pub lags: Option<StLags>,
    #[serde(default = "default_residual")]
    pub residual_units: usize,
    #[serde(default = "default_cheb")]
    pub cheb_order: usize,
    #[serde(default = "default_temporal_kernel")]
    pub temporal_kernel: usize,
    #[serde(default = "default_diffusion")]
    pub diffusion_steps: usize,
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind) -> Self {
        Self {
            kind,
            latent_dim: default_latent(),
            hidden: default_hidden(),
            kernel: default_kernel(),
            lags: None,
            residual_units: default_residual(),
            cheb_order: default_cheb(),
            temporal_kernel: default_temporal_kernel(),
            diffusion_steps: default_diffusion(),
        }
    }
}

/// Per-sample input dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputShape {
    Raster {
        t_len: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    Graph {
        t_len: usize,
        n_nodes: usize,
        features: usize,
    },
}

impl InputShape {
    pub fn t_len(&self) -> usize {
        match *self {
            InputShape::Raster { t_len, .. } | InputShape::Graph { t_len, .. } => t_len,
        }
    }

    pub fn with_t_len(self, t: usize) -> Self {
        match self {
            InputShape::Raster { channels, height, width, .. } => InputShape::Raster {
                t_len: t,
                channels,
                height,
                width,
            },
            InputShape::Graph { n_nodes, features, .. } => InputShape::Graph {
                t_len: t,
                n_nodes,
                features,
            },
        }
    }

    /// Values per frame.
    pub fn frame_len(&self) -> usize {
        match *self {
            InputShape::Raster { channels, height, width, .. } => channels * height * width,
            InputShape::Graph { n_nodes, features, .. } => n_nodes * features,
        }
    }

    /// `[T, ...]` of one sample.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            InputShape::Raster {
                t_len,
                channels,
                height,
                width,
            } => vec![t_len, channels, height, width],
            InputShape::Graph { t_len, n_nodes, features } => vec![t_len, n_nodes, features],
        }
    }

    /// `[B, T, ...]`.
    pub fn batch_dims(&self, batch: usize) -> Vec<usize> {
        let mut d = vec![batch];
        d.extend(self.dims());
        d
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, InputShape::Graph { .. })
    }
}

/// Diagonal Gaussian posterior of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPosterior {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// Posterior parameters of a batch on the tape, each `[B, d]`.
#[derive(Clone, Copy, Debug)]
pub struct Posterior<'g> {
    pub mu: Var<'g>,
    pub logvar: Var<'g>,
}

/// Shared `(mu, logvar)` heads; the log-variance is clamped.
pub(crate) fn heads<'g>(p: &Bound<'g>, features: Var<'g>) -> Posterior<'g> {
    Posterior {
        mu: layers::linear(p, "enc.mu", features),
        logvar: layers::linear(p, "enc.logvar", features).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP),
    }
}

pub(crate) fn init_heads(ps: &mut ParameterSet, features: usize, latent: usize, rng: &mut impl rand::Rng) {
    layers::init_linear(ps, "enc.mu", features, latent, rng);
    layers::init_linear(ps, "enc.logvar", features, latent, rng);
}

/// Spatial pooling factor used before the heads: 2 when both sides are even.
pub fn pool_factor(height: usize, width: usize) -> usize {
    if height.is_multiple_of(2) && width.is_multiple_of(2) {
        2
    } else {
        1
    }
}

/// Node operators precomputed from the adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphOperators {
    /// Rescaled normalized Laplacian `2 L / lambda_max - I`.
    pub scaled_laplacian: Tensor,
    /// `D_out^-1 W`.
    pub forward_walk: Tensor,
    /// `D_in^-1 W^T`.
    pub backward_walk: Tensor,
}

impl GraphOperators {
    pub fn new(adj: &Adjacency) -> Self {
        let n = adj.n();
        Self {
            scaled_laplacian: stgcn::scaled_laplacian(adj),
            forward_walk: Tensor::new(vec![n, n], adj.row_normalized()),
            backward_walk: Tensor::new(vec![n, n], adj.transposed().row_normalized()),
        }
    }
}

/// An encoder/decoder pair for one input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct StVae {
    pub spec: EncoderSpec,
    pub shape: InputShape,
    graph: Option<GraphOperators>,
    lags: Option<StLags>,
}

impl StVae {
    pub fn new(spec: EncoderSpec, shape: InputShape, adjacency: Option<&Adjacency>) -> Result<Self, NetError> {
        if spec.latent_dim == 0 || spec.hidden == 0 {
            return Err(NetError::InvalidSpec("latent_dim and hidden must be >= 1".into()));
        }
        if spec.kernel.is_multiple_of(2) {
            return Err(NetError::InvalidSpec(format!("kernel {} must be odd", spec.kernel)));
        }
        let data = if shape.is_graph() { "graph" } else { "raster" };
        if spec.kind.is_graph() != shape.is_graph() {
            return Err(NetError::KindMismatch { kind: spec.kind, data });
        }
        let t = shape.t_len();
        let mut lags = None;
        let mut graph = None;
        match spec.kind {
            EncoderKind::StResNet => {
                let l = spec.lags.unwrap_or_else(|| StLags::for_length(t));
                l.validate(t)?;
                lags = Some(l);
            }
            EncoderKind::Stgcn => {
                stgcn::validate(&spec, t)?;
                graph = Some(GraphOperators::new(adjacency.ok_or(NetError::MissingAdjacency)?));
            }
            EncoderKind::Dcrnn => {
                graph = Some(GraphOperators::new(adjacency.ok_or(NetError::MissingAdjacency)?));
            }
            EncoderKind::ConvLstm | EncoderKind::ImageConv => {}
        }
        if let (Some(g), InputShape::Graph { n_nodes, .. }) = (&graph, shape) {
            if g.forward_walk.shape()[0] != n_nodes {
                return Err(NetError::InvalidSpec(format!(
                    "adjacency has {} nodes, data has {n_nodes}",
                    g.forward_walk.shape()[0]
                )));
            }
        }
        Ok(Self { spec, shape, graph, lags })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    pub fn graph_operators(&self) -> Option<&GraphOperators> {
        self.graph.as_ref()
    }

    pub fn lags(&self) -> Option<StLags> {
        self.lags
    }

    fn graph_ops(&self) -> &GraphOperators {
        self.graph.as_ref().expect("graph model without operators")
    }

    /// Fresh encoder (`enc.*`) and decoder (`dec.*`) weights.
    pub fn init_params(&self, seed: u64) -> ParameterSet {
        let mut ps = ParameterSet::new(seed);
        let mut rng = rng::stream(seed, streams::INIT);
        match self.spec.kind {
            EncoderKind::ConvLstm => convlstm::init(&mut ps, &self.spec, self.shape, &mut rng),
            EncoderKind::StResNet => stresnet::init(&mut ps, &self.spec, self.shape, self.lags.unwrap(), &mut rng),
            EncoderKind::Stgcn => stgcn::init(&mut ps, &self.spec, self.shape, &mut rng),
            EncoderKind::Dcrnn => dcrnn::init(&mut ps, &self.spec, self.shape, &mut rng),
            EncoderKind::ImageConv => imageconv::init(&mut ps, &self.spec, self.shape, &mut rng),
        }
        ps
    }

    /// `x` is a `[B, T, ...]` batch.
    pub fn encode<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Posterior<'g> {
        debug_assert_eq!(&x.shape()[1..], &self.shape.dims()[..]);
        match self.spec.kind {
            EncoderKind::ConvLstm => convlstm::encode(p, &self.spec, x),
            EncoderKind::StResNet => stresnet::encode(p, &self.spec, self.lags.unwrap(), x),
            EncoderKind::Stgcn => stgcn::encode(p, &self.spec, &Rc::new(self.graph_ops().scaled_laplacian.clone()), x),
            EncoderKind::Dcrnn => dcrnn::encode(p, &self.spec, &dcrnn::Walks::new(self.graph_ops()), x),
            EncoderKind::ImageConv => imageconv::encode(p, &self.spec, x),
        }
    }

    /// Reconstruction with the same `[B, T, ...]` shape as the input.
    pub fn decode<'g>(&self, p: &Bound<'g>, z: Var<'g>) -> Var<'g> {
        match self.spec.kind {
            EncoderKind::ConvLstm => convlstm::decode(p, &self.spec, self.shape, z),
            EncoderKind::StResNet => stresnet::decode(p, &self.spec, self.shape, z),
            EncoderKind::Stgcn => stgcn::decode(
                p,
                &self.spec,
                self.shape,
                &Rc::new(self.graph_ops().scaled_laplacian.clone()),
                z,
            ),
            EncoderKind::Dcrnn => dcrnn::decode(p, &self.spec, self.shape, &dcrnn::Walks::new(self.graph_ops()), z),
            EncoderKind::ImageConv => imageconv::decode(p, &self.spec, self.shape, z),
        }
    }

    /// Posterior parameters of every sample in `x`, without recording gradients.
    pub fn posteriors(&self, params: &ParameterSet, x: &Tensor) -> Vec<LatentPosterior> {
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let post = self.encode(&p, g.constant(x.clone()));
        let (mu, lv) = (post.mu.value(), post.logvar.value());
        let d = self.spec.latent_dim;
        mu.data()
            .chunks(d)
            .zip(lv.data().chunks(d))
            .map(|(m, l)| LatentPosterior {
                mu: m.to_vec(),
                logvar: l.to_vec(),
            })
            .collect()
    }

    /// Decoder output for latent codes `z [B, d]`, without recording gradients.
    pub fn reconstruct(&self, params: &ParameterSet, z: &Tensor) -> Tensor {
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let out = self.decode(&p, g.constant(z.clone()));
        let v = out.value().clone();
        v
    }
}

/// Frames `start..start+len` of each raster, as a `[B, len, C, H, W]` batch.
pub fn raster_batch(samples: &[&RasterSequence], start: usize, len: usize) -> Tensor {
    let first = samples[0];
    let mut data = Vec::with_capacity(samples.len() * len * first.frame_len());
    for s in samples {
        let f = s.frame_len();
        data.extend(s.values()[start * f..(start + len) * f].iter().map(|&v| v as f64));
    }
    Tensor::new(vec![samples.len(), len, first.channels, first.height, first.width], data)
}

/// Frames `start..start+len` of each graph signal, as a `[B, len, N, F]` batch.
pub fn graph_batch(samples: &[&GraphSequence], start: usize, len: usize) -> Tensor {
    let first = samples[0];
    let mut data = Vec::with_capacity(samples.len() * len * first.frame_len());
    for s in samples {
        let f = s.frame_len();
        data.extend(s.values()[start * f..(start + len) * f].iter().map(|&v| v as f64));
    }
    Tensor::new(vec![samples.len(), len, first.n_nodes, first.features], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_must_match_data() {
        let raster = InputShape::Raster {
            t_len: 4,
            channels: 1,
            height: 8,
            width: 8,
        };
        let err = StVae::new(EncoderSpec::new(EncoderKind::Stgcn), raster, None).unwrap_err();
        assert!(matches!(err, NetError::KindMismatch { .. }));
        let graph = InputShape::Graph {
            t_len: 6,
            n_nodes: 4,
            features: 1,
        };
        assert!(StVae::new(EncoderSpec::new(EncoderKind::ConvLstm), graph, None).is_err());
        assert!(matches!(
            StVae::new(EncoderSpec::new(EncoderKind::Dcrnn), graph, None).unwrap_err(),
            NetError::MissingAdjacency
        ));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = EncoderSpec::new(EncoderKind::StResNet);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"stresnet\""));
        assert_eq!(serde_json::from_str::<EncoderSpec>(&text).unwrap(), spec);
        let short: EncoderSpec = serde_json::from_str(r#"{"kind":"convlstm"}"#).unwrap();
        assert_eq!(short, EncoderSpec::new(EncoderKind::ConvLstm));
        assert!(serde_json::from_str::<EncoderSpec>(r#"{"kind":"convlstm","width":3}"#).is_err());
    }
}
