//! Forecasting accuracy as a function of how much labelled training data the
//! predictor sees, for a frozen latent code versus a raw-input baseline.

use serde::{Deserialize, Serialize};
use stvae_core::stnets::mlp::Mlp;
use stvae_core::Tensor;

use crate::config::ExperimentConfig;
use crate::data::{build_dataset, Prepared};
use crate::forecast::{fit, predict, rmse_in_signal_units, FitOptions, Forecaster, LatentMlp, RawBaseline};
use crate::pipeline::{encoder_spec, latent_means, posteriors, run_prepared, Trained};
use crate::HarnessError;

/// Smallest predictor training set accepted.
pub const MIN_PORTION_SAMPLES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortionRow {
    pub portion: f64,
    pub seed: u64,
    pub n_train: usize,
    pub latent_rmse: f64,
    pub raw_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortionMedian {
    pub portion: f64,
    pub n_train: usize,
    pub latent_rmse: f64,
    pub raw_rmse: f64,
}

/// Fits both predictors from scratch on each `(portion, seed)` subsample of
/// the training split and scores them on the test split.
pub fn portion_sweep(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    encoder: &Trained,
    portions: &[f64],
    seeds: &[u64],
) -> Result<Vec<PortionRow>, HarnessError> {
    if portions.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Config("portion sweep needs at least one portion and one seed".into()));
    }
    if portions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config(format!("portions {portions:?} must be strictly ascending")));
    }
    let smallest = (portions[0] * prep.split.train.len() as f64).floor() as usize;
    if smallest < MIN_PORTION_SAMPLES {
        return Err(HarnessError::Config(format!(
            "portion {} of {} training samples gives {smallest} < {MIN_PORTION_SAMPLES}",
            portions[0],
            prep.split.train.len()
        )));
    }

    let all: Vec<usize> = (0..prep.len()).collect();
    let features = latent_means(&posteriors(encoder, prep, &all));
    let latent = LatentMlp(Mlp::new(encoder.model.latent_dim(), prep.target_len()));
    let raw = RawBaseline::new(prep.shape, cfg.training.baseline_hidden);
    let test_targets = prep.targets_of(&prep.split.test);

    let mut rows = Vec::with_capacity(portions.len() * seeds.len());
    for &portion in portions {
        for &seed in seeds {
            let idx = prep.split.portion(portion, seed)?;
            let opts = FitOptions {
                steps: cfg.training.predictor_steps,
                learning_rate: cfg.training.predictor_learning_rate,
                batch_size: cfg.training.batch_size,
                seed,
                validation: prep.split.val.clone(),
            };
            rows.push(PortionRow {
                portion,
                seed,
                n_train: idx.len(),
                latent_rmse: rmse_in_signal_units(&fit_predict(&latent, &features, &prep.targets, &idx, &prep.split.test, &opts)?, &test_targets, &prep.scale)?,
                raw_rmse: rmse_in_signal_units(&fit_predict(&raw, &prep.inputs, &prep.targets, &idx, &prep.split.test, &opts)?, &test_targets, &prep.scale)?,
            });
        }
    }
    Ok(rows)
}

fn fit_predict<F: Forecaster>(model: &F, x: &Tensor, y: &Tensor, idx: &[usize], test: &[usize], opts: &FitOptions) -> Result<Tensor, HarnessError> {
    let ps = fit(model, x, y, idx, opts)?;
    Ok(predict(model, &ps, &x.select(0, test)))
}

/// Median over seeds per portion, in the order portions first appear.
pub fn medians(rows: &[PortionRow]) -> Vec<PortionMedian> {
    let mut portions: Vec<f64> = Vec::new();
    for r in rows {
        if !portions.contains(&r.portion) {
            portions.push(r.portion);
        }
    }
    portions
        .into_iter()
        .map(|p| {
            let group: Vec<&PortionRow> = rows.iter().filter(|r| r.portion == p).collect();
            PortionMedian {
                portion: p,
                n_train: group[0].n_train,
                latent_rmse: median(group.iter().map(|r| r.latent_rmse).collect()),
                raw_rmse: median(group.iter().map(|r| r.raw_rmse).collect()),
            }
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains the encoder of grid entry 0 with the first seed, then runs the
/// portion sweep over the configured portions and seeds.
pub fn run_portions(cfg: &ExperimentConfig) -> Result<Vec<PortionRow>, HarnessError> {
    cfg.validate()?;
    let dataset = build_dataset(&cfg.dataset, cfg.training.dataset_seed)?;
    let prep = Prepared::new(&dataset, &cfg.training, false)?;
    let (record, trained) = run_prepared(cfg, &prep, encoder_spec(cfg), cfg.grid[0], 0, cfg.seeds[0]);
    let trained = trained.ok_or_else(|| HarnessError::Config(format!("encoder run {} failed: {}", record.run_id, record.error.unwrap_or_default())))?;
    portion_sweep(cfg, &prep, &trained, &cfg.portions, &cfg.seeds)
}
