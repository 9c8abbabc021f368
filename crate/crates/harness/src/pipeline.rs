//! One training run end to end: fit the ST-VAE, freeze it, fit the latent
//! forecaster, then evaluate every metric.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use stvae_core::metrics::{decompose, MetricReport, Mode, PosteriorBank, RunLabel, FULL_SUM_LIMIT};
use stvae_core::objectives::{LossBreakdown, ObjectiveConfig, TrainConfig, Trainer};
use stvae_core::params::{AdamConfig, ParameterSet};
use stvae_core::rng::{self, streams};
use stvae_core::stnets::imageconv::matched_hidden;
use stvae_core::stnets::mlp::Mlp;
use stvae_core::stnets::{save_checkpoint, EncoderKind, EncoderSpec, LatentPosterior, StVae};
use stvae_core::Tensor;

use crate::config::ExperimentConfig;
use crate::data::{build_dataset, Prepared};
use crate::forecast::{fit, predict, rmse_in_signal_units, BatchSampler, FitOptions, LatentMlp};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub grid_index: usize,
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub encoder: EncoderSpec,
    pub param_count: usize,
    pub config: ExperimentConfig,
    pub trace: Vec<TracePoint>,
    /// Present iff the run completed.
    pub report: Option<MetricReport>,
    pub error: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.report.is_some()
    }

    /// Reconstruction loss of the first traced step.
    pub fn initial_recon(&self) -> Option<f64> {
        self.trace.first().map(|t| t.loss.recon)
    }
}

pub fn run_id(grid_index: usize, objective: &ObjectiveConfig, seed: u64) -> String {
    format!("g{grid_index:02}_{}_s{seed}", objective.method.name())
}

/// A trained, frozen encoder/decoder.
pub struct Trained {
    pub model: StVae,
    pub params: ParameterSet,
}

pub fn encoder_spec(cfg: &ExperimentConfig) -> EncoderSpec {
    EncoderSpec {
        latent_dim: cfg.latent_dim,
        hidden: cfg.training.hidden,
        ..EncoderSpec::new(cfg.encoder)
    }
}

pub fn build_model(spec: EncoderSpec, prep: &Prepared) -> Result<StVae, HarnessError> {
    Ok(StVae::new(spec, prep.shape, prep.adjacency.as_deref())?)
}

/// Generates (or loads) the dataset and runs grid entry `grid_index` with `seed`.
pub fn run_single(cfg: &ExperimentConfig, grid_index: usize, seed: u64) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let dataset = build_dataset(&cfg.dataset, cfg.training.dataset_seed)?;
    let prep = Prepared::new(&dataset, &cfg.training, false)?;
    let objective = *cfg
        .grid
        .get(grid_index)
        .ok_or_else(|| HarnessError::Config(format!("grid index {grid_index} out of range")))?;
    Ok(run_prepared(cfg, &prep, encoder_spec(cfg), objective, grid_index, seed).0)
}

/// Trains and evaluates one configuration on already prepared data.
/// Training failures are recorded in the returned record, never raised.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    spec: EncoderSpec,
    objective: ObjectiveConfig,
    grid_index: usize,
    seed: u64,
) -> (RunRecord, Option<Trained>) {
    let started = Instant::now();
    let mut record = RunRecord {
        run_id: run_id(grid_index, &objective, seed),
        grid_index,
        seed,
        objective,
        encoder: spec.clone(),
        param_count: 0,
        config: cfg.clone(),
        trace: Vec::new(),
        report: None,
        error: None,
        checkpoint: None,
        wall_seconds: 0.0,
    };
    let outcome = train_and_evaluate(cfg, prep, spec, objective, seed, &mut record);
    record.wall_seconds = started.elapsed().as_secs_f64();
    match outcome {
        Ok((report, trained)) => {
            record.report = Some(report);
            (record, Some(trained))
        }
        Err(e) => {
            record.error = Some(e.to_string());
            (record, None)
        }
    }
}

fn train_and_evaluate(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    spec: EncoderSpec,
    objective: ObjectiveConfig,
    seed: u64,
    record: &mut RunRecord,
) -> Result<(MetricReport, Trained), HarnessError> {
    let opts = &cfg.training;
    let model = build_model(spec, prep)?;
    let mut train_cfg = TrainConfig::new(objective, seed, prep.split.train.len());
    train_cfg.adam = AdamConfig {
        lr: opts.learning_rate,
        ..Default::default()
    };
    train_cfg.discriminator_adam.lr = opts.discriminator_learning_rate;
    train_cfg.discriminator_steps = opts.discriminator_steps;
    let mut trainer = Trainer::new(model, train_cfg)?;
    record.param_count = trainer.params().count();
    let mut sampler = BatchSampler::new(prep.split.train.clone(), opts.batch_size, rng::stream(seed, streams::BATCH));
    for step in 0..cfg.steps {
        let x = prep.inputs_of(&sampler.next_batch());
        let loss = trainer.step(&x)?;
        if step % opts.trace_every == 0 || step + 1 == cfg.steps {
            record.trace.push(TracePoint { step, loss });
        }
    }
    let trained = Trained {
        params: trainer.params().clone(),
        model: trainer.model().clone(),
    };
    if !opts.skip_artifacts {
        let dir = cfg.output_dir.join("runs").join(&record.run_id).join("checkpoint");
        save_checkpoint(&trained.params, &trained.model.spec, &dir)?;
        record.checkpoint = Some(dir);
    }
    let report = evaluate(cfg, prep, &trained, objective, seed)?;
    Ok((report, trained))
}

/// Posterior parameters of rows `idx`, encoded in chunks.
pub fn posteriors(trained: &Trained, prep: &Prepared, idx: &[usize]) -> Vec<LatentPosterior> {
    idx.chunks(128)
        .flat_map(|rows| trained.model.posteriors(&trained.params, &prep.inputs_of(rows)))
        .collect()
}

/// Posterior means as a `[n, d]` feature matrix.
pub fn latent_means(post: &[LatentPosterior]) -> Tensor {
    let d = post.first().map_or(0, |p| p.mu.len());
    Tensor::new(vec![post.len(), d], post.iter().flat_map(|p| p.mu.iter().copied()).collect())
}

/// Half the summed squared error per sample when decoding posterior means, averaged over `idx`.
pub fn reconstruction_error(trained: &Trained, prep: &Prepared, idx: &[usize]) -> f64 {
    let mut total = 0.0;
    for rows in idx.chunks(128) {
        let x = prep.inputs_of(rows);
        let mu = latent_means(&trained.model.posteriors(&trained.params, &x));
        let x_hat = trained.model.reconstruct(&trained.params, &mu);
        total += 0.5 * x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    total / idx.len() as f64
}

fn evaluate(cfg: &ExperimentConfig, prep: &Prepared, trained: &Trained, objective: ObjectiveConfig, seed: u64) -> Result<MetricReport, HarnessError> {
    let opts = &cfg.training;
    let train_post = posteriors(trained, prep, &prep.split.train);
    let bank = PosteriorBank::new(&train_post)?;
    let mode = if bank.len() <= FULL_SUM_LIMIT {
        Mode::FullSum
    } else {
        Mode::Mws { batch: 1024 }
    };
    let decomposition = decompose(&bank, opts.eval_samples, mode, seed)?;
    let recon = reconstruction_error(trained, prep, &prep.split.test);

    let d = trained.model.latent_dim();
    let features = latent_means(&posteriors(trained, prep, &(0..prep.len()).collect::<Vec<_>>()));
    let mlp = LatentMlp(Mlp::new(d, prep.target_len()));
    let fit_opts = FitOptions {
        steps: opts.predictor_steps,
        learning_rate: opts.predictor_learning_rate,
        batch_size: opts.batch_size,
        seed,
        validation: prep.split.val.clone(),
    };
    let ps = fit(&mlp, &features, &prep.targets, &prep.split.train, &fit_opts)?;
    let pred = predict(&mlp, &ps, &features.select(0, &prep.split.test));
    let utility = rmse_in_signal_units(&pred, &prep.targets_of(&prep.split.test), &prep.scale)?;

    let label = RunLabel {
        method: objective.method.name().into(),
        encoder: trained.model.spec.kind.name().into(),
        beta: objective.beta,
        gamma: objective.gamma,
        seed,
    };
    Ok(MetricReport::new(label, bank.len(), recon, &decomposition, Some(utility)))
}

/// The time-as-channels image baseline: raster windows are folded with
/// `time_to_channels` and fed to a plain conv VAE whose width is chosen to
/// match the parameter count of the configured ST encoder.
pub fn image_baseline_run(cfg: &ExperimentConfig, grid_index: usize, seed: u64) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let dataset = build_dataset(&cfg.dataset, cfg.training.dataset_seed)?;
    let st = Prepared::new(&dataset, &cfg.training, false)?;
    let folded = Prepared::new(&dataset, &cfg.training, true)?;
    let objective = *cfg
        .grid
        .get(grid_index)
        .ok_or_else(|| HarnessError::Config(format!("grid index {grid_index} out of range")))?;
    let st_spec = encoder_spec(cfg);
    let target = build_model(st_spec.clone(), &st)?.init_params(0).count();
    let mut spec = EncoderSpec {
        kind: EncoderKind::ImageConv,
        ..st_spec
    };
    spec.hidden = matched_hidden(&spec, folded.shape, target);
    let (mut record, _) = run_prepared(cfg, &folded, spec, objective, grid_index, seed);
    record.run_id = format!("{}_image", record.run_id);
    Ok(record)
}
