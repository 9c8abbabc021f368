use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stvae_core::metrics::MetricReport;
use stvae_core::stdata::save_dataset;
use stvae_harness::data::build_dataset;
use stvae_harness::pipeline::{image_baseline_run, run_single, RunRecord};
use stvae_harness::portions::{run_portions, PortionRow};
use stvae_harness::report::{emit_portions, emit_report};
use stvae_harness::sweep::{read_records, run_sweep, write_aggregate, write_record};
use stvae_harness::{ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "stvae", about = "Disentanglement sweeps for spatio-temporal VAEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic dataset and save it as a container.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate a single grid entry.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        grid_index: usize,
        /// Train the parameter-matched time-as-channels image baseline instead.
        #[arg(long)]
        image_baseline: bool,
    },
    /// Run every grid entry with every seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare latent and raw-input forecasters over training-set portions.
    Portions {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build tables, correlations and plots from a finished sweep.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every attempted run completed.
fn run(cmd: Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::Generate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ds = build_dataset(&cfg.dataset, cfg.training.dataset_seed)?;
            save_dataset(&ds, &out)?;
            println!("wrote {} {} samples to {}", ds.len(), ds.kind(), out.display());
            Ok(true)
        }
        Command::Train {
            config,
            seed,
            grid_index,
            image_baseline,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let record = if image_baseline {
                image_baseline_run(&cfg, grid_index, seed)?
            } else {
                run_single(&cfg, grid_index, seed)?
            };
            if !cfg.training.skip_artifacts {
                write_record(&record, &cfg.output_dir)?;
            }
            summarize(std::slice::from_ref(&record));
            Ok(record.completed())
        }
        Command::Sweep { config, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let records = run_sweep(&cfg, jobs)?;
            summarize(&records);
            Ok(records.iter().all(RunRecord::completed))
        }
        Command::Portions { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_portions(&cfg)?;
            emit_portions(&rows, &cfg.output_dir)?;
            for r in &rows {
                println!(
                    "portion {:.3} seed {} n={} latent {:.4} raw {:.4}",
                    r.portion, r.seed, r.n_train, r.latent_rmse, r.raw_rmse
                );
            }
            Ok(true)
        }
        Command::Report { runs, out } => {
            let records = read_records(&runs)?;
            let reports: Vec<MetricReport> = records.iter().filter_map(|r| r.report.clone()).collect();
            let portions = read_portions(&runs.join("portions.csv"))?;
            let summary = emit_report(&reports, portions.as_deref(), &out)?;
            write_aggregate(&records, &out)?;
            for f in [summary.score_vs_tc, summary.score_vs_utility].into_iter().flatten() {
                println!(
                    "{}: n={} pearson {:.4} spearman {:.4} slope {:.4} intercept {:.4}",
                    f.analysis, f.n, f.pearson, f.spearman, f.slope, f.intercept
                );
            }
            Ok(records.iter().all(RunRecord::completed))
        }
    }
}

fn read_portions(path: &Path) -> Result<Option<Vec<PortionRow>>, HarnessError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<PortionRow>, _>>()?;
    Ok(Some(rows))
}

fn summarize(records: &[RunRecord]) {
    for r in records {
        match (&r.report, &r.error) {
            (Some(m), _) => println!(
                "{} ok  recon {:.4} mi {:.4} tc {:.4} dwkl {:.4} score {:.4} ({:.1}s)",
                r.run_id,
                m.recon,
                m.mi,
                m.tc,
                m.dwkl,
                m.score(),
                r.wall_seconds
            ),
            (None, e) => println!("{} FAILED {}", r.run_id, e.as_deref().unwrap_or("")),
        }
    }
}
