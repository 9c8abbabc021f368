//! Multi-step forecasters: an MLP on frozen latent codes, and a small conv
//! (or, on graphs, fully connected) network trained from scratch on raw windows.

use rand::seq::SliceRandom;
use stvae_core::autograd::{Graph, Var};
use stvae_core::metrics::utility_rmse;
use stvae_core::params::{Adam, AdamConfig, Bound, ParameterSet};
use stvae_core::rng::{self, streams};
use stvae_core::stdata::ScaleRecord;
use stvae_core::stnets::layers::{conv, init_conv};
use stvae_core::stnets::mlp::Mlp;
use stvae_core::stnets::InputShape;
use stvae_core::Tensor;

use crate::config::HORIZON;
use crate::HarnessError;

/// Maps a batch of inputs to flat `[B, outputs]` forecasts.
pub trait Forecaster {
    fn init(&self, seed: u64) -> ParameterSet;
    fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g>;
}

pub struct LatentMlp(pub Mlp);

impl Forecaster for LatentMlp {
    fn init(&self, seed: u64) -> ParameterSet {
        let mut ps = ParameterSet::new(seed);
        self.0.init(&mut ps, &mut rng::stream(seed, streams::PREDICTOR));
        ps
    }

    fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        self.0.forward(p, x)
    }
}

/// Forecasting baseline that never sees a latent code.
pub enum RawBaseline {
    /// Observed frames stacked as channels, three same-padded convolutions.
    Raster { t_obs: usize, channels: usize, hidden: usize },
    /// Flattened window through an MLP.
    Graph(Mlp),
}

impl RawBaseline {
    pub fn new(shape: InputShape, hidden: usize) -> Self {
        match shape {
            InputShape::Raster { t_len, channels, .. } => RawBaseline::Raster {
                t_obs: t_len,
                channels,
                hidden,
            },
            InputShape::Graph { .. } => {
                let frame = shape.frame_len();
                RawBaseline::Graph(Mlp::new(shape.t_len() * frame, HORIZON * frame))
            }
        }
    }
}

impl Forecaster for RawBaseline {
    fn init(&self, seed: u64) -> ParameterSet {
        let mut ps = ParameterSet::new(seed);
        let mut r = rng::stream(seed, streams::PREDICTOR);
        match self {
            RawBaseline::Raster { t_obs, channels, hidden } => {
                init_conv(&mut ps, "raw.c0", t_obs * channels, *hidden, 3, &mut r);
                init_conv(&mut ps, "raw.c1", *hidden, *hidden, 3, &mut r);
                init_conv(&mut ps, "raw.out", *hidden, HORIZON * channels, 1, &mut r);
            }
            RawBaseline::Graph(mlp) => mlp.init(&mut ps, &mut r),
        }
        ps
    }

    fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let b = s[0];
        match self {
            RawBaseline::Raster { t_obs, channels, .. } => {
                let (h, w) = (s[3], s[4]);
                let x = x.reshape(&[b, t_obs * channels, h, w]);
                let y = conv(p, "raw.c0", x).relu();
                let y = conv(p, "raw.c1", y).relu();
                conv(p, "raw.out", y).reshape(&[b, HORIZON * channels * h * w])
            }
            RawBaseline::Graph(mlp) => {
                let flat: usize = s[1..].iter().product();
                mlp.forward(p, x.reshape(&[b, flat]))
            }
        }
    }
}

/// Steps between validation checks when a validation set is given.
pub const VALIDATE_EVERY: usize = 25;

pub struct FitOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Rows scored every `VALIDATE_EVERY` steps; the weights with the lowest
    /// error are returned. Empty means the final weights are returned.
    pub validation: Vec<usize>,
}

fn mse(pred: &Tensor, target: &Tensor) -> f64 {
    pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len().max(1) as f64
}

/// Minimizes mean squared error on rows `idx` of `(x, y)`.
pub fn fit<F: Forecaster>(model: &F, x: &Tensor, y: &Tensor, idx: &[usize], opts: &FitOptions) -> Result<ParameterSet, HarnessError> {
    if idx.is_empty() {
        return Err(HarnessError::Config("forecaster needs at least one training sample".into()));
    }
    let mut ps = model.init(opts.seed);
    let mut opt = Adam::new(AdamConfig {
        lr: opts.learning_rate,
        ..Default::default()
    });
    let mut sampler = BatchSampler::new(idx.to_vec(), opts.batch_size, rng::stream(opts.seed, streams::BATCH));
    let val = (!opts.validation.is_empty()).then(|| (x.select(0, &opts.validation), y.select(0, &opts.validation)));
    let mut best: Option<(f64, ParameterSet)> = None;
    for step in 0..opts.steps {
        let rows = sampler.next_batch();
        let g = Graph::new();
        let p = ps.bind(&g);
        let pred = model.forward(&p, g.constant(x.select(0, &rows)));
        let loss = (pred - g.constant(y.select(0, &rows))).square().mean();
        if !loss.item().is_finite() {
            return Err(HarnessError::NonFinite(format!("forecaster loss at step {step}")));
        }
        let grads = p.grads(&g.backward(loss));
        opt.update(&mut ps, &grads);
        if let Some((vx, vy)) = &val {
            if (step + 1) % VALIDATE_EVERY == 0 || step + 1 == opts.steps {
                let err = mse(&predict(model, &ps, vx), vy);
                if best.as_ref().is_none_or(|(b, _)| err < *b) {
                    best = Some((err, ps.clone()));
                }
            }
        }
    }
    Ok(best.map_or(ps, |(_, b)| b))
}

pub fn predict<F: Forecaster>(model: &F, ps: &ParameterSet, x: &Tensor) -> Tensor {
    let n = x.shape()[0];
    let mut out = Vec::new();
    let mut width = 0;
    for start in (0..n).step_by(256) {
        let rows: Vec<usize> = (start..(start + 256).min(n)).collect();
        let g = Graph::new();
        let y = model.forward(&ps.bind_frozen(&g), g.constant(x.select(0, &rows)));
        width = y.shape()[1];
        out.extend_from_slice(y.value().data());
    }
    Tensor::new(vec![n, width], out)
}

/// Per-sample RMSE in original signal units, averaged over samples.
pub fn rmse_in_signal_units(pred: &Tensor, target: &Tensor, scale: &ScaleRecord) -> Result<f64, HarnessError> {
    let unscale = |t: &Tensor| t.data().iter().map(|&v| scale.unscale_value(v)).collect::<Vec<_>>();
    Ok(utility_rmse(&unscale(pred), &unscale(target), target.shape()[1])?)
}

/// Endless minibatches: shuffled passes over a fixed index set.
pub struct BatchSampler {
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: rng::StdRng,
}

impl BatchSampler {
    pub fn new(pool: Vec<usize>, batch: usize, rng: rng::StdRng) -> Self {
        let batch = batch.min(pool.len()).max(1);
        Self {
            order: Vec::new(),
            pos: 0,
            pool,
            batch,
            rng,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.batch);
        while rows.len() < self.batch {
            if self.pos == self.order.len() {
                self.order = self.pool.clone();
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let take = (self.batch - rows.len()).min(self.order.len() - self.pos);
            rows.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        rows
    }
}
