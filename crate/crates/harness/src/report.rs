//! Aggregate tables, correlations and plots over a set of run reports.

use std::fs;
use std::path::Path;

use serde::Serialize;
use stvae_core::metrics::{correlation, linear_fit, CorrelationKind, MetricReport};

use crate::portions::{medians, PortionRow};
use crate::svg::{self, Point, Series};
use crate::{io_err, HarnessError};

/// Correlation and least-squares line between two report columns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub analysis: &'static str,
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    /// `None` when fewer than two reports or a constant column make it undefined.
    pub score_vs_tc: Option<Fit>,
    pub score_vs_utility: Option<Fit>,
}

/// Regularization strength that distinguishes runs of one method.
pub fn strength(r: &MetricReport) -> f64 {
    if r.method == "factor_vae" {
        r.gamma
    } else {
        r.beta
    }
}

fn fit(analysis: &'static str, xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let pearson = correlation(xs, ys, CorrelationKind::Pearson).ok()?;
    let spearman = correlation(xs, ys, CorrelationKind::Spearman).ok()?;
    let (slope, intercept) = linear_fit(xs, ys).ok()?;
    Some(Fit {
        analysis,
        n: xs.len(),
        pearson,
        spearman,
        slope,
        intercept,
    })
}

#[derive(Serialize)]
struct PairRow<'a> {
    method: &'a str,
    strength: f64,
    seed: u64,
    x: f64,
    y: f64,
}

fn write_pairs(path: &Path, reports: &[&MetricReport], xname: &str, yname: &str, x: impl Fn(&MetricReport) -> f64, y: impl Fn(&MetricReport) -> f64) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "strength", "seed", xname, yname])?;
    for r in reports {
        w.serialize(PairRow {
            method: &r.method,
            strength: strength(r),
            seed: r.seed,
            x: x(r),
            y: y(r),
        })?;
    }
    w.flush().map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Shades points by log-strength across the whole report set.
fn shades(reports: &[&MetricReport]) -> Vec<f64> {
    let logs: Vec<f64> = reports.iter().map(|r| strength(r).max(1e-12).ln()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| if hi > lo { (l - lo) / (hi - lo) } else { 0.5 }).collect()
}

/// Writes the report tables and figures under `out` and returns the fitted correlations.
pub fn emit_report(reports: &[MetricReport], portions: Option<&[PortionRow]>, out: &Path) -> Result<ReportSummary, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::EmptyRecords);
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("runs.csv");
    MetricReport::write_csv(reports, fs::File::create(&path).map_err(io_err(&path))?)?;

    let all: Vec<&MetricReport> = reports.iter().collect();
    let shade = shades(&all);
    let points = |sel: &[&MetricReport], x: &dyn Fn(&MetricReport) -> f64, y: &dyn Fn(&MetricReport) -> f64| -> Vec<Point> {
        sel.iter()
            .map(|r| {
                let k = all.iter().position(|a| std::ptr::eq(*a, *r)).unwrap();
                Point { x: x(r), y: y(r), shade: shade[k] }
            })
            .collect()
    };

    write_pairs(&out.join("mi_tc.csv"), &all, "tc", "mi", |r| r.tc, |r| r.mi)?;
    write_text(
        &out.join("mi_tc.svg"),
        &svg::scatter(&points(&all, &|r| r.tc, &|r| r.mi), None, "MI vs TC (blue: weak, red: strong)", "total correlation", "index-code MI"),
    )?;

    let tc: Vec<f64> = all.iter().map(|r| r.tc).collect();
    let score: Vec<f64> = all.iter().map(|r| r.score()).collect();
    let score_vs_tc = fit("score_vs_tc", &tc, &score);
    write_pairs(&out.join("score_tc.csv"), &all, "tc", "score", |r| r.tc, |r| r.score())?;
    write_text(
        &out.join("score_tc.svg"),
        &svg::scatter(
            &points(&all, &|r| r.tc, &|r| r.score()),
            score_vs_tc.as_ref().map(|f| (f.slope, f.intercept)),
            "Score vs TC",
            "total correlation",
            "score",
        ),
    )?;

    let with_utility: Vec<&MetricReport> = all.iter().copied().filter(|r| r.utility_rmse.is_some()).collect();
    let util: Vec<f64> = with_utility.iter().map(|r| r.utility_rmse.unwrap()).collect();
    let util_score: Vec<f64> = with_utility.iter().map(|r| r.score()).collect();
    let score_vs_utility = fit("score_vs_utility", &util_score, &util);
    write_pairs(&out.join("score_utility.csv"), &with_utility, "score", "utility_rmse", |r| r.score(), |r| r.utility_rmse.unwrap())?;
    write_text(
        &out.join("score_utility.svg"),
        &svg::scatter(
            &points(&with_utility, &|r| r.score(), &|r| r.utility_rmse.unwrap()),
            score_vs_utility.as_ref().map(|f| (f.slope, f.intercept)),
            "Forecast RMSE vs score",
            "score",
            "utility RMSE",
        ),
    )?;

    let path = out.join("correlations.csv");
    // Header written by hand so undefined fits can be blank rows.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
    w.write_record(["analysis", "n", "pearson", "spearman", "slope", "intercept"])?;
    for (name, n, f) in [("score_vs_tc", tc.len(), &score_vs_tc), ("score_vs_utility", util.len(), &score_vs_utility)] {
        match f {
            Some(f) => w.serialize(f)?,
            None => w.write_record([name, &n.to_string(), "", "", "", ""])?,
        }
    }
    w.flush().map_err(io_err(&path))?;

    if let Some(rows) = portions {
        emit_portions(rows, out)?;
    }
    Ok(ReportSummary {
        score_vs_tc,
        score_vs_utility,
    })
}

/// `portions.csv`, `portions_median.csv` and the median curve plot.
pub fn emit_portions(rows: &[PortionRow], out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("portions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(&path))?;
    let med = medians(rows);
    let path = out.join("portions_median.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for m in &med {
        w.serialize(m)?;
    }
    w.flush().map_err(io_err(&path))?;
    let series = [
        Series {
            name: "latent code".into(),
            points: med.iter().map(|m| (m.portion, m.latent_rmse)).collect(),
        },
        Series {
            name: "raw input".into(),
            points: med.iter().map(|m| (m.portion, m.raw_rmse)).collect(),
        },
    ];
    write_text(
        &out.join("portions.svg"),
        &svg::lines(&series, "Median forecast RMSE by training portion", "portion of training split", "RMSE"),
    )
}
