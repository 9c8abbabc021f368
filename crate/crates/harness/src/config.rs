//! Experiment configuration, read from JSON with unknown keys rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stvae_core::objectives::ObjectiveConfig;
use stvae_core::stdata::{GraphGenConfig, RasterGenConfig};
use stvae_core::stnets::EncoderKind;

use crate::HarnessError;

/// Number of future frames the downstream predictor forecasts.
pub const HORIZON: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    MovingBlobs(RasterGenConfig),
    GraphDiffusion(GraphGenConfig),
    /// A directory written by `stvae generate`.
    Container(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub encoder: EncoderKind,
    pub grid: Vec<ObjectiveConfig>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub latent_dim: usize,
    #[serde(default = "default_portions")]
    pub portions: Vec<f64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub training: TrainingOptions,
}

fn default_portions() -> Vec<f64> {
    vec![0.05, 0.1, 0.25, 0.5, 1.0]
}

/// Knobs with desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingOptions {
    /// Channel width of the encoder; the image baseline matches its parameter count.
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Adam step size of the FactorVAE discriminator.
    pub discriminator_learning_rate: f64,
    /// Discriminator updates per model update.
    pub discriminator_steps: usize,
    /// Monte Carlo samples for the information estimators.
    pub eval_samples: usize,
    /// Record the loss every this many steps.
    pub trace_every: usize,
    pub predictor_steps: usize,
    pub predictor_learning_rate: f64,
    pub split: [f64; 3],
    /// Seed of the generated dataset and of the split; shared by every run.
    pub dataset_seed: u64,
    /// Channel width of the raw-input forecasting baseline.
    pub baseline_hidden: usize,
    /// Skip the checkpoint and per-run record files.
    pub skip_artifacts: bool,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            hidden: 8,
            batch_size: 32,
            learning_rate: 1e-3,
            discriminator_learning_rate: 1e-4,
            discriminator_steps: 1,
            eval_samples: 2048,
            trace_every: 100,
            predictor_steps: 400,
            predictor_learning_rate: 3e-3,
            split: [0.7, 0.15, 0.15],
            dataset_seed: 0,
            baseline_hidden: 8,
            skip_artifacts: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.grid.is_empty() {
            return bad("grid must not be empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad(format!("seeds {:?} must be distinct", self.seeds));
        }
        if let Some(p) = self.portions.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return bad(format!("portion {p} outside (0, 1]"));
        }
        if self.portions.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("portions {:?} must be strictly ascending", self.portions));
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1".into());
        }
        let t = &self.training;
        if t.batch_size == 0 || t.discriminator_steps == 0 || t.eval_samples == 0 || t.trace_every == 0 || t.hidden == 0 || t.baseline_hidden == 0 {
            return bad("batch_size, discriminator_steps, eval_samples, trace_every, hidden and baseline_hidden must be >= 1".into());
        }
        for o in &self.grid {
            o.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
