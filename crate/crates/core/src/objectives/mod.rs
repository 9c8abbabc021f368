//! Training objectives that share one reconstruction term and differ only in
//! how strongly they penalize each part of the latent KL:
//! index-code mutual information, total correlation and dimension-wise KL.

mod aggregate;
mod trainer;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::Var;
use crate::tensor::Tensor;

pub use aggregate::{log_density_terms, minibatch_terms, MinibatchTerms};
pub use trainer::{Forward, LossContext, TrainConfig, Trainer};

/// Largest magnitude allowed for a discriminator logit.
pub const LOGIT_CLAMP: f64 = 20.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid objective: {0}")]
    InvalidConfig(String),
    #[error("non-finite {what} at step {step}: {breakdown:?}")]
    NonFinite {
        what: &'static str,
        step: u64,
        breakdown: Box<LossBreakdown>,
    },
    #[error("discriminator probability left (0, 1) at step {0}")]
    DiscriminatorRange(u64),
    #[error("minibatch of {batch} exceeds dataset size {n}")]
    BatchTooLarge { batch: usize, n: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vae,
    BetaVae,
    BetaTcvae,
    FactorVae,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vae => "vae",
            Method::BetaVae => "beta_vae",
            Method::BetaTcvae => "beta_tcvae",
            Method::FactorVae => "factor_vae",
        }
    }
}

fn one() -> f64 {
    1.0
}

/// `beta` scales the KL (or only the total correlation for `beta_tcvae`);
/// `gamma` scales the discriminator estimate for `factor_vae`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub method: Method,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl ObjectiveConfig {
    pub fn vae() -> Self {
        Self {
            method: Method::Vae,
            beta: 1.0,
            gamma: 0.0,
        }
    }

    pub fn beta_vae(beta: f64) -> Self {
        Self {
            method: Method::BetaVae,
            beta,
            gamma: 0.0,
        }
    }

    pub fn beta_tcvae(beta: f64) -> Self {
        Self {
            method: Method::BetaTcvae,
            beta,
            gamma: 0.0,
        }
    }

    pub fn factor_vae(gamma: f64) -> Self {
        Self {
            method: Method::FactorVae,
            beta: 1.0,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ObjectiveError::InvalidConfig(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Effective weights on `(mi, tc, dwkl)`.
    pub fn term_weights(&self) -> [f64; 3] {
        match self.method {
            Method::Vae => [1.0, 1.0, 1.0],
            Method::BetaVae => [self.beta; 3],
            Method::BetaTcvae => [1.0, self.beta, 1.0],
            Method::FactorVae => [1.0, 1.0 + self.gamma, 1.0],
        }
    }
}

/// Scalar values of one training step, all batch means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl_total: f64,
    pub mi_hat: f64,
    pub tc_hat: f64,
    pub dwkl_hat: f64,
    pub discriminator_loss: Option<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn all_finite(&self) -> bool {
        [self.recon, self.kl_total, self.mi_hat, self.tc_hat, self.dwkl_hat, self.total]
            .iter()
            .chain(self.discriminator_loss.iter())
            .all(|v| v.is_finite())
    }
}

/// `mu + exp(logvar / 2) * eps`.
pub fn reparameterize<'g>(mu: Var<'g>, logvar: Var<'g>, eps: Var<'g>) -> Var<'g> {
    mu + logvar.scale(0.5).exp() * eps
}

/// Half the summed squared error per sample, averaged over the batch.
pub fn recon_loss<'g>(x: Var<'g>, x_hat: Var<'g>) -> Var<'g> {
    let b = x.shape()[0] as f64;
    (x - x_hat).square().sum().scale(0.5 / b)
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))` summed over dimensions, averaged over the batch.
pub fn kl_to_standard_normal<'g>(mu: Var<'g>, logvar: Var<'g>) -> Var<'g> {
    let b = mu.shape()[0] as f64;
    (mu.square() + logvar.exp() - logvar).offset(-1.0).sum().scale(0.5 / b)
}

/// Per-sample, per-dimension closed-form KL.
pub fn kl_per_dim(mu: &[f64], logvar: &[f64]) -> Vec<f64> {
    mu.iter().zip(logvar).map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv)).collect()
}

/// Shuffles every column of `z [B, d]` independently across the batch.
pub fn permute_dims(z: &Tensor, rng: &mut impl Rng) -> Tensor {
    let (b, d) = (z.shape()[0], z.shape()[1]);
    let mut out = z.clone();
    let mut order: Vec<usize> = (0..b).collect();
    for j in 0..d {
        order.shuffle(rng);
        for (i, &src) in order.iter().enumerate() {
            out.data_mut()[i * d + j] = z.data()[src * d + j];
        }
    }
    out
}

/// Batch mean of the clamped discriminator logit, the density-ratio estimate of total correlation.
pub fn density_ratio_tc<'g>(logits: Var<'g>) -> Var<'g> {
    logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).mean()
}

/// Mean binary cross-entropy with joint samples labelled 1 and permuted samples labelled 0.
pub fn discriminator_loss<'g>(logits_joint: Var<'g>, logits_permuted: Var<'g>) -> Var<'g> {
    let joint = logits_joint.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    let perm = logits_permuted.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    ((-joint).softplus().mean() + perm.softplus().mean()).scale(0.5)
}

/// `sum_j log N(z_j; mu_j, exp(logvar_j))` per row of `[B, d]` inputs.
pub fn log_gaussian_rows<'g>(z: Var<'g>, mu: Var<'g>, logvar: Var<'g>) -> Var<'g> {
    let diff = z - mu;
    (diff.square() * (-logvar).exp() + logvar).offset(LN_2PI).sum_axis(1).scale(-0.5)
}

/// `sum_j log N(z_j; 0, 1)` per row.
pub fn log_standard_normal_rows(z: Var<'_>) -> Var<'_> {
    z.square().offset(LN_2PI).sum_axis(1).scale(-0.5)
}
