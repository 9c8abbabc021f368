//! Estimators for information-theoretic properties of the aggregate posterior
//! `q(z) = 1/N sum_n q(z | x_n)`, plus effectiveness metrics and exact
//! discrete oracles.
//!
//! All information quantities are in nats.

mod discrete;
mod report;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, normal_vec, streams};
use crate::stnets::LatentPosterior;

pub use discrete::{brute_force_discrete, DiscreteInfo};
pub use report::{MetricReport, RunLabel, REPORT_HEADER};

/// Largest bank accepted by the exhaustive estimator.
pub const FULL_SUM_LIMIT: usize = 10_000;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("posterior bank is empty")]
    EmptyBank,
    #[error("minibatch of {batch} exceeds bank size {n}")]
    BatchTooLarge { batch: usize, n: usize },
    #[error("bank of {0} posteriors exceeds the exhaustive-sum limit")]
    BankTooLarge(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid probability table: {0}")]
    InvalidTable(String),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
}

/// Per-sample diagonal Gaussian posteriors of a whole dataset, stored row-major `[N, d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorBank {
    mu: Vec<f64>,
    logvar: Vec<f64>,
    n: usize,
    d: usize,
}

impl PosteriorBank {
    pub fn new(posteriors: &[LatentPosterior]) -> Result<Self, MetricError> {
        let first = posteriors.first().ok_or(MetricError::EmptyBank)?;
        let d = first.mu.len();
        let mut mu = Vec::with_capacity(posteriors.len() * d);
        let mut logvar = Vec::with_capacity(posteriors.len() * d);
        for p in posteriors {
            if p.mu.len() != d || p.logvar.len() != d {
                return Err(MetricError::Shape(format!("posterior of dims {}/{} in a {d}-dim bank", p.mu.len(), p.logvar.len())));
            }
            mu.extend_from_slice(&p.mu);
            logvar.extend_from_slice(&p.logvar);
        }
        Self::from_flat(mu, logvar, d)
    }

    pub fn from_flat(mu: Vec<f64>, logvar: Vec<f64>, d: usize) -> Result<Self, MetricError> {
        if d == 0 || mu.is_empty() {
            return Err(MetricError::EmptyBank);
        }
        if mu.len() != logvar.len() || !mu.len().is_multiple_of(d) {
            return Err(MetricError::Shape(format!("{} means and {} log-variances for d = {d}", mu.len(), logvar.len())));
        }
        if mu.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite("posterior bank".into()));
        }
        Ok(Self {
            n: mu.len() / d,
            mu,
            logvar,
            d,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn logvar(&self) -> &[f64] {
        &self.logvar
    }

    pub fn subset(&self, indices: &[usize]) -> PosteriorBank {
        let d = self.d;
        let pick = |v: &[f64]| indices.iter().flat_map(|&i| v[i * d..(i + 1) * d].iter().copied()).collect();
        PosteriorBank {
            mu: pick(&self.mu),
            logvar: pick(&self.logvar),
            n: indices.len(),
            d,
        }
    }

    /// Mean closed-form KL to the standard normal over the bank.
    pub fn mean_kl(&self) -> f64 {
        let total: f64 = self
            .mu
            .iter()
            .zip(&self.logvar)
            .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
            .sum();
        total / self.n as f64
    }
}

/// How the aggregate density is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Exact mixture over all `N` posteriors.
    FullSum,
    /// Mixture over one random minibatch of `batch` posteriors drawn without replacement.
    Mws { batch: usize },
}

pub fn log_normal(z: f64, mu: f64, logvar: f64) -> f64 {
    let d = z - mu;
    -0.5 * (LN_2PI + logvar + d * d * (-logvar).exp())
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log (1/K) sum_k q(z_i | k)` and its per-dimension counterpart for `m`
/// points `z [m, d]` under the `K` components `(mu, logvar) [K, d]`.
pub(crate) fn mixture_log_density(z: &[f64], mu: &[f64], logvar: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let m = z.len() / d;
    let k = mu.len() / d;
    let norm = (k as f64).ln();
    let mut log_qz = Vec::with_capacity(m);
    let mut log_qzj = Vec::with_capacity(m * d);
    let mut comp = vec![0.0; k * d];
    let mut joint = vec![0.0; k];
    for i in 0..m {
        let zi = &z[i * d..(i + 1) * d];
        for c in 0..k {
            let mut s = 0.0;
            for j in 0..d {
                let v = log_normal(zi[j], mu[c * d + j], logvar[c * d + j]);
                comp[j * k + c] = v;
                s += v;
            }
            joint[c] = s;
        }
        log_qz.push(logsumexp(joint.iter().copied()) - norm);
        for j in 0..d {
            log_qzj.push(logsumexp(comp[j * k..(j + 1) * k].iter().copied()) - norm);
        }
    }
    (log_qz, log_qzj)
}

/// `log q(z)` (length `m`) and `log q(z_j)` (`[m, d]`) for evaluation points `z [m, d]`.
///
/// The minibatch mode sums over a random batch and normalizes by its size, so a
/// batch covering the whole bank reproduces the exhaustive sum.
pub fn log_q_aggregate(z: &[f64], bank: &PosteriorBank, mode: Mode, seed: u64) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
    if bank.is_empty() {
        return Err(MetricError::EmptyBank);
    }
    if !z.len().is_multiple_of(bank.d) {
        return Err(MetricError::Shape(format!("{} coordinates for d = {}", z.len(), bank.d)));
    }
    match mode {
        Mode::FullSum => {
            if bank.n > FULL_SUM_LIMIT {
                return Err(MetricError::BankTooLarge(bank.n));
            }
            Ok(mixture_log_density(z, &bank.mu, &bank.logvar, bank.d))
        }
        Mode::Mws { batch } => {
            if batch > bank.n {
                return Err(MetricError::BatchTooLarge { batch, n: bank.n });
            }
            if batch == 0 {
                return Err(MetricError::TooFew { need: 1, got: 0 });
            }
            let mut r = rng::stream(seed, streams::SUBSAMPLE);
            let idx = sample(&mut r, bank.n, batch).into_vec();
            let sub = bank.subset(&idx);
            Ok(mixture_log_density(z, &sub.mu, &sub.logvar, sub.d))
        }
    }
}

/// Monte Carlo points, each drawn from the posterior of a known bank index.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub index: Vec<usize>,
    /// `[m, d]`.
    pub z: Vec<f64>,
}

/// `m` points cycling through shuffled passes over the bank, so every
/// posterior contributes equally (up to one sample).
pub fn draw_samples(bank: &PosteriorBank, m: usize, seed: u64) -> SampleSet {
    let mut r = rng::stream(seed, streams::EVAL);
    let mut index: Vec<usize> = Vec::with_capacity(m);
    let mut pass: Vec<usize> = (0..bank.n).collect();
    while index.len() < m {
        pass.shuffle(&mut r);
        index.extend(pass.iter().take(m - index.len()));
    }
    let d = bank.d;
    let noise: Vec<f64> = normal_vec(&mut r, m * d);
    let z = index
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| {
            let noise = &noise;
            (0..d).map(move |j| {
                let sd = (0.5 * bank.logvar[n * d + j]).exp();
                bank.mu[n * d + j] + sd * noise[i * d + j]
            })
        })
        .collect();
    SampleSet { index, z }
}

/// The three KL terms from one shared sample set; they add up to `kl`, the
/// Monte Carlo estimate of the mean posterior KL, up to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mi: f64,
    pub tc: f64,
    pub dwkl: f64,
    pub kl: f64,
    pub m_samples: usize,
}

pub fn decompose(bank: &PosteriorBank, m: usize, mode: Mode, seed: u64) -> Result<Decomposition, MetricError> {
    if m == 0 {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    let s = draw_samples(bank, m, seed);
    let (log_qz, log_qzj) = log_q_aggregate(&s.z, bank, mode, seed)?;
    Ok(assemble(bank, &s, &log_qz, &log_qzj))
}

fn assemble(bank: &PosteriorBank, s: &SampleSet, log_qz: &[f64], log_qzj: &[f64]) -> Decomposition {
    let d = bank.d;
    let m = s.index.len();
    let (mut mi, mut tc, mut dwkl, mut kl) = (0.0, 0.0, 0.0, 0.0);
    for (i, &n) in s.index.iter().enumerate() {
        let zi = &s.z[i * d..(i + 1) * d];
        let log_qzx: f64 = (0..d).map(|j| log_normal(zi[j], bank.mu[n * d + j], bank.logvar[n * d + j])).sum();
        let log_pz: f64 = zi.iter().map(|&v| -0.5 * (LN_2PI + v * v)).sum();
        let sum_qzj: f64 = log_qzj[i * d..(i + 1) * d].iter().sum();
        mi += log_qzx - log_qz[i];
        tc += log_qz[i] - sum_qzj;
        dwkl += sum_qzj - log_pz;
        kl += log_qzx - log_pz;
    }
    let m_f = m as f64;
    Decomposition {
        mi: mi / m_f,
        tc: tc / m_f,
        dwkl: dwkl / m_f,
        kl: kl / m_f,
        m_samples: m,
    }
}

/// Index-code mutual information `I(n; z)`.
pub fn estimate_mi_index_code(bank: &PosteriorBank, m: usize, mode: Mode, seed: u64) -> Result<f64, MetricError> {
    decompose(bank, m, mode, seed).map(|d| d.mi)
}

/// Total correlation `KL(q(z) || prod_j q(z_j))`.
pub fn estimate_tc(bank: &PosteriorBank, m: usize, mode: Mode, seed: u64) -> Result<f64, MetricError> {
    decompose(bank, m, mode, seed).map(|d| d.tc)
}

/// Dimension-wise KL `sum_j KL(q(z_j) || N(0, 1))`.
pub fn estimate_dwkl(bank: &PosteriorBank, m: usize, mode: Mode, seed: u64) -> Result<f64, MetricError> {
    decompose(bank, m, mode, seed).map(|d| d.dwkl)
}

/// `I(z_j; v)` for a discrete factor `v` with `levels` values, one entry per bank row.
///
/// `q(z_j | v)` mixes the posteriors of the samples carrying level `v` uniformly;
/// the entropy term reuses the same Monte Carlo points.
pub fn factor_mi(bank: &PosteriorBank, factor: &[usize], levels: usize, j: usize, m: usize, seed: u64) -> Result<f64, MetricError> {
    if factor.len() != bank.n {
        return Err(MetricError::Shape(format!("{} factor values for {} posteriors", factor.len(), bank.n)));
    }
    if j >= bank.d {
        return Err(MetricError::Shape(format!("dimension {j} of {}", bank.d)));
    }
    if let Some(&bad) = factor.iter().find(|&&v| v >= levels) {
        return Err(MetricError::Shape(format!("factor level {bad} outside 0..{levels}")));
    }
    if m == 0 {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    let d = bank.d;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); levels];
    for (n, &v) in factor.iter().enumerate() {
        members[v].push(n);
    }
    let s = draw_samples(bank, m, seed);
    let log_n = (bank.n as f64).ln();
    let mut total = 0.0;
    for (i, &n) in s.index.iter().enumerate() {
        let zj = s.z[i * d + j];
        let comp = |k: usize| log_normal(zj, bank.mu[k * d + j], bank.logvar[k * d + j]);
        let group = &members[factor[n]];
        let log_cond = logsumexp(group.iter().map(|&k| comp(k))) - (group.len() as f64).ln();
        let log_marg = logsumexp((0..bank.n).map(comp)) - log_n;
        total += log_cond - log_marg;
    }
    Ok(total / m as f64)
}

/// `mi - tc`.
pub fn disentanglement_score(mi: f64, tc: f64) -> f64 {
    mi - tc
}

/// Root mean squared error over the `points` values of each sample, averaged over samples.
pub fn utility_rmse(predictions: &[f64], targets: &[f64], points: usize) -> Result<f64, MetricError> {
    if predictions.len() != targets.len() || points == 0 || !targets.len().is_multiple_of(points) {
        return Err(MetricError::Shape(format!(
            "{} predictions, {} targets, {points} points per sample",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    let samples = targets.len() / points;
    let total: f64 = predictions
        .chunks(points)
        .zip(targets.chunks(points))
        .map(|(p, t)| (p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / points as f64).sqrt())
        .sum();
    Ok(total / samples as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

pub fn correlation(xs: &[f64], ys: &[f64], kind: CorrelationKind) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::Shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(MetricError::TooFew { need: 2, got: xs.len() });
    }
    match kind {
        CorrelationKind::Pearson => pearson(xs, ys),
        CorrelationKind::Spearman => pearson(&ranks(xs), &ranks(ys)),
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::NonFinite("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut k = i;
        while k + 1 < order.len() && xs[order[k + 1]] == xs[order[i]] {
            k += 1;
        }
        let avg = (i + k) as f64 / 2.0 + 1.0;
        for &o in &order[i..=k] {
            r[o] = avg;
        }
        i = k + 1;
    }
    r
}

/// Least-squares `(slope, intercept)` of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), MetricError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(MetricError::TooFew { need: 2, got: xs.len().min(ys.len()) });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(MetricError::NonFinite("regression on a constant predictor".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests;
