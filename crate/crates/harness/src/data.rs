//! Turning a dataset into normalized observation windows and forecast targets.

use std::sync::Arc;

use stvae_core::stdata::{
    generate_graph_diffusion, generate_moving_blobs, load_dataset, time_to_channels, Adjacency, Dataset, DatasetSplit,
    FactorTable, Samples, ScaleRecord,
};
use stvae_core::stnets::{graph_batch, raster_batch, InputShape};
use stvae_core::Tensor;

use crate::config::{DatasetSource, TrainingOptions, HORIZON};
use crate::HarnessError;

pub fn build_dataset(source: &DatasetSource, seed: u64) -> Result<Dataset, HarnessError> {
    Ok(match source {
        DatasetSource::MovingBlobs(c) => {
            let (samples, factors) = generate_moving_blobs(c, seed)?;
            Dataset {
                samples: Samples::Raster(samples),
                factors,
            }
        }
        DatasetSource::GraphDiffusion(c) => {
            let (samples, factors) = generate_graph_diffusion(c, seed)?;
            Dataset {
                samples: Samples::Graph(samples),
                factors,
            }
        }
        DatasetSource::Container(dir) => load_dataset(dir)?,
    })
}

/// Every sample split into an observed window (the model input) and the
/// `HORIZON` frames that follow it (the forecasting target), min-max scaled
/// with statistics of the training split only.
pub struct Prepared {
    /// Shape of one observed window as the model sees it.
    pub shape: InputShape,
    pub adjacency: Option<Arc<Adjacency>>,
    /// `[N, t_obs, ...]`.
    pub inputs: Tensor,
    /// `[N, HORIZON * frame]`.
    pub targets: Tensor,
    pub split: DatasetSplit,
    pub scale: ScaleRecord,
    pub factors: FactorTable,
}

impl Prepared {
    /// With `fold_time`, each raster window is passed through `time_to_channels`.
    pub fn new(dataset: &Dataset, opts: &TrainingOptions, fold_time: bool) -> Result<Self, HarnessError> {
        let n = dataset.len();
        let t = dataset.t_len();
        if t <= HORIZON {
            return Err(HarnessError::Config(format!("sequences of length {t} leave no observed frames before a {HORIZON}-step horizon")));
        }
        let t_obs = t - HORIZON;
        let split = DatasetSplit::shuffled(n, opts.split, opts.dataset_seed)?;
        if split.test.is_empty() {
            return Err(HarnessError::Config(format!("{n} samples leave an empty test split")));
        }
        let (inputs, targets, shape, adjacency, scale) = match &dataset.samples {
            Samples::Raster(all) => {
                let train: Vec<_> = split.train.iter().map(|&i| all[i].clone()).collect();
                let scale = ScaleRecord::fit(&train)?;
                let scaled: Vec<_> = all.iter().map(|s| scale.apply(s)).collect();
                let mut windows: Vec<_> = scaled.iter().map(|s| s.frames(0, t_obs)).collect();
                if fold_time {
                    windows = windows.iter().map(time_to_channels).collect();
                }
                let w = &windows[0];
                let shape = InputShape::Raster {
                    t_len: w.t_len,
                    channels: w.channels,
                    height: w.height,
                    width: w.width,
                };
                let refs: Vec<_> = windows.iter().collect();
                let inputs = raster_batch(&refs, 0, w.t_len);
                let refs: Vec<_> = scaled.iter().collect();
                let targets = raster_batch(&refs, t_obs, HORIZON);
                (inputs, targets, shape, None, scale)
            }
            Samples::Graph(all) => {
                if fold_time {
                    return Err(HarnessError::Config("time-as-channels folding needs raster data".into()));
                }
                let train: Vec<_> = split.train.iter().map(|&i| all[i].clone()).collect();
                let scale = ScaleRecord::fit(&train)?;
                let scaled: Vec<_> = all.iter().map(|s| scale.apply(s)).collect();
                let refs: Vec<_> = scaled.iter().collect();
                let s0 = &scaled[0];
                let shape = InputShape::Graph {
                    t_len: t_obs,
                    n_nodes: s0.n_nodes,
                    features: s0.features,
                };
                let inputs = graph_batch(&refs, 0, t_obs);
                let targets = graph_batch(&refs, t_obs, HORIZON);
                (inputs, targets, shape, Some(Arc::clone(&s0.adjacency)), scale)
            }
        };
        let out = targets.len() / n;
        Ok(Self {
            shape,
            adjacency,
            inputs,
            targets: targets.reshape(&[n, out]),
            split,
            scale,
            factors: dataset.factors.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs_of(&self, idx: &[usize]) -> Tensor {
        self.inputs.select(0, idx)
    }

    pub fn targets_of(&self, idx: &[usize]) -> Tensor {
        self.targets.select(0, idx)
    }

    /// Points per forecast target.
    pub fn target_len(&self) -> usize {
        self.targets.shape()[1]
    }
}
