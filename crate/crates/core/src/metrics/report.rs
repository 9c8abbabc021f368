use serde::{Deserialize, Serialize};

use super::MetricError;

/// Column order of the run-level CSV.
pub const REPORT_HEADER: &[&str] = &[
    "method",
    "encoder",
    "beta",
    "gamma",
    "seed",
    "recon",
    "mi",
    "tc",
    "dwkl",
    "score",
    "utility_rmse",
    "m_samples",
    "n_dataset",
];

/// One row of results for a trained model. The score is derived on
/// construction and cannot drift from `mi - tc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReport")]
pub struct MetricReport {
    pub method: String,
    pub encoder: String,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub recon: f64,
    pub mi: f64,
    pub tc: f64,
    pub dwkl: f64,
    score: f64,
    pub utility_rmse: Option<f64>,
    pub m_samples: usize,
    pub n_dataset: usize,
}

#[derive(Deserialize)]
struct RawReport {
    method: String,
    encoder: String,
    beta: f64,
    gamma: f64,
    seed: u64,
    recon: f64,
    mi: f64,
    tc: f64,
    dwkl: f64,
    score: f64,
    utility_rmse: Option<f64>,
    m_samples: usize,
    n_dataset: usize,
}

impl TryFrom<RawReport> for MetricReport {
    type Error = MetricError;

    fn try_from(r: RawReport) -> Result<Self, MetricError> {
        if r.score != r.mi - r.tc {
            return Err(MetricError::Shape(format!("score {} is not mi - tc = {}", r.score, r.mi - r.tc)));
        }
        Ok(MetricReport {
            method: r.method,
            encoder: r.encoder,
            beta: r.beta,
            gamma: r.gamma,
            seed: r.seed,
            n_dataset: r.n_dataset,
            m_samples: r.m_samples,
            recon: r.recon,
            mi: r.mi,
            tc: r.tc,
            dwkl: r.dwkl,
            score: r.score,
            utility_rmse: r.utility_rmse,
        })
    }
}

/// Identity of a run, kept apart from its measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLabel {
    pub method: String,
    pub encoder: String,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl MetricReport {
    pub fn new(label: RunLabel, n_dataset: usize, recon: f64, d: &super::Decomposition, utility_rmse: Option<f64>) -> Self {
        Self {
            method: label.method,
            encoder: label.encoder,
            beta: label.beta,
            gamma: label.gamma,
            seed: label.seed,
            n_dataset,
            m_samples: d.m_samples,
            recon,
            mi: d.mi,
            tc: d.tc,
            dwkl: d.dwkl,
            score: super::disentanglement_score(d.mi, d.tc),
            utility_rmse,
        }
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn write_csv<W: std::io::Write>(reports: &[MetricReport], out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in reports {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricReport>, csv::Error> {
        csv::Reader::from_reader(input).deserialize().collect()
    }
}
