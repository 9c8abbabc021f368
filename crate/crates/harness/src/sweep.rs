//! Cartesian sweeps over objective settings and seeds.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use stvae_core::metrics::MetricReport;

use crate::config::ExperimentConfig;
use crate::data::{build_dataset, Prepared};
use crate::pipeline::{encoder_spec, run_prepared, RunRecord};
use crate::{io_err, HarnessError};

/// Runs every `(grid entry, seed)` pair on a pool of `jobs` worker threads.
/// Records come back in grid-major, seed-minor order whatever the scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    let dataset = build_dataset(&cfg.dataset, cfg.training.dataset_seed)?;
    let prep = Prepared::new(&dataset, &cfg.training, false)?;
    let tasks: Vec<(usize, u64)> = (0..cfg.grid.len()).flat_map(|g| cfg.seeds.iter().map(move |&s| (g, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let spec = encoder_spec(cfg);
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(g, seed)| run_prepared(cfg, &prep, spec.clone(), cfg.grid[g], g, seed).0)
            .collect()
    });
    if !cfg.training.skip_artifacts {
        for r in &records {
            write_record(r, &cfg.output_dir)?;
        }
    }
    write_aggregate(&records, &cfg.output_dir)?;
    Ok(records)
}

pub fn write_record(record: &RunRecord, output_dir: &Path) -> Result<(), HarnessError> {
    let dir = output_dir.join("runs").join(&record.run_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join("record.json");
    let text = serde_json::to_string_pretty(record).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))
}

/// Loads every `runs/*/record.json` below `dir`, ordered as the sweep produced them.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let runs = dir.join("runs");
    let mut records = Vec::new();
    for entry in fs::read_dir(&runs).map_err(io_err(&runs))? {
        let path = entry.map_err(io_err(&runs))?.path().join("record.json");
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let r: RunRecord = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        records.push(r);
    }
    records.sort_by_key(|r| {
        let pos = r.config.seeds.iter().position(|&s| s == r.seed).unwrap_or(usize::MAX);
        (r.grid_index, pos, r.run_id.clone())
    });
    Ok(records)
}

#[derive(Serialize)]
struct StatusRow<'a> {
    run_id: &'a str,
    method: &'a str,
    beta: f64,
    gamma: f64,
    seed: u64,
    status: &'a str,
    error: &'a str,
}

/// `runs.csv` holds one metric row per completed run; `status.csv` lists every attempted run.
pub fn write_aggregate(records: &[RunRecord], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let reports: Vec<MetricReport> = records.iter().filter_map(|r| r.report.clone()).collect();
    let path = dir.join("runs.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    MetricReport::write_csv(&reports, file)?;
    let path = dir.join("status.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in records {
        w.serialize(StatusRow {
            run_id: &r.run_id,
            method: r.objective.method.name(),
            beta: r.objective.beta,
            gamma: r.objective.gamma,
            seed: r.seed,
            status: if r.completed() { "completed" } else { "failed" },
            error: r.error.as_deref().unwrap_or(""),
        })?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}
