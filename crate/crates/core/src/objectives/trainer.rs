use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, Graph, Var};
use crate::params::{Adam, AdamConfig, Bound, ParameterSet};
use crate::rng::{self, normal_vec, streams, StdRng};
use crate::stnets::discriminator::Discriminator;
use crate::stnets::StVae;
use crate::tensor::Tensor;

use super::{
    density_ratio_tc, discriminator_loss, kl_to_standard_normal, minibatch_terms, permute_dims, recon_loss, reparameterize,
    LossBreakdown, Method, ObjectiveConfig, ObjectiveError,
};

fn discriminator_adam() -> AdamConfig {
    AdamConfig {
        lr: 1e-4,
        beta1: 0.5,
        beta2: 0.9,
        eps: 1e-8,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "discriminator_adam")]
    pub discriminator_adam: AdamConfig,
    /// Discriminator updates per model update, each against a fresh permutation.
    #[serde(default = "one")]
    pub discriminator_steps: usize,
    pub seed: u64,
    /// Number of training samples the minibatches are drawn from.
    pub dataset_size: usize,
}

impl TrainConfig {
    pub fn new(objective: ObjectiveConfig, seed: u64, dataset_size: usize) -> Self {
        Self {
            objective,
            adam: AdamConfig::default(),
            discriminator_adam: discriminator_adam(),
            discriminator_steps: 1,
            seed,
            dataset_size,
        }
    }
}

fn one() -> usize {
    1
}

struct DiscriminatorState {
    net: Discriminator,
    params: ParameterSet,
    opt: Adam,
}

/// Owns the model weights, optimizers and random streams of one run.
pub struct Trainer {
    model: StVae,
    params: ParameterSet,
    opt: Adam,
    config: TrainConfig,
    disc: Option<DiscriminatorState>,
    noise: StdRng,
    permute: StdRng,
    steps: u64,
}

/// Everything besides the weights that the loss of one batch depends on.
pub struct LossContext<'a> {
    pub model: &'a StVae,
    pub objective: ObjectiveConfig,
    pub dataset_size: usize,
    /// Required for `factor_vae`; its weights enter as constants.
    pub discriminator: Option<(&'a Discriminator, &'a ParameterSet)>,
}

/// Differentiable total, the latent sample, and the scalar breakdown.
pub struct Forward<'g> {
    pub total: Var<'g>,
    pub z: Var<'g>,
    pub breakdown: LossBreakdown,
}

impl LossContext<'_> {
    /// Loss of batch `x` under model weights `p` and reparameterization noise `eps [B, d]`.
    pub fn forward<'g>(&self, g: &'g Graph, p: &Bound<'g>, x: &Tensor, eps: Tensor) -> Result<Forward<'g>, ObjectiveError> {
        let obj = self.objective;
        let xv = g.constant(x.clone());
        let post = self.model.encode(p, xv);
        let z = reparameterize(post.mu, post.logvar, g.constant(eps));
        let recon = recon_loss(xv, self.model.decode(p, z));
        let kl = kl_to_standard_normal(post.mu, post.logvar);
        let terms = minibatch_terms(z, post.mu, post.logvar, self.dataset_size)?;
        let (total, tc_hat) = match obj.method {
            Method::Vae => (recon + kl, terms.tc),
            Method::BetaVae => (recon + kl.scale(obj.beta), terms.tc),
            Method::BetaTcvae => (recon + terms.mi + terms.tc.scale(obj.beta) + terms.dwkl, terms.tc),
            Method::FactorVae => {
                let (net, params) = self
                    .discriminator
                    .ok_or_else(|| ObjectiveError::InvalidConfig("factor_vae needs a discriminator".into()))?;
                let tc = density_ratio_tc(net.logits(&params.bind_frozen(g), z));
                (recon + kl + tc.scale(obj.gamma), tc)
            }
        };
        let breakdown = LossBreakdown {
            recon: recon.item(),
            kl_total: kl.item(),
            mi_hat: terms.mi.item(),
            tc_hat: tc_hat.item(),
            dwkl_hat: terms.dwkl.item(),
            discriminator_loss: None,
            total: total.item(),
        };
        Ok(Forward { total, z, breakdown })
    }
}

impl Trainer {
    pub fn new(model: StVae, config: TrainConfig) -> Result<Self, ObjectiveError> {
        let params = model.init_params(config.seed);
        Self::with_params(model, params, config)
    }

    pub fn with_params(model: StVae, params: ParameterSet, config: TrainConfig) -> Result<Self, ObjectiveError> {
        config.objective.validate()?;
        if config.dataset_size == 0 {
            return Err(ObjectiveError::InvalidConfig("dataset_size must be >= 1".into()));
        }
        if config.discriminator_steps == 0 {
            return Err(ObjectiveError::InvalidConfig("discriminator_steps must be >= 1".into()));
        }
        let disc = (config.objective.method == Method::FactorVae).then(|| {
            let net = Discriminator::new(model.latent_dim());
            DiscriminatorState {
                params: net.init_params(config.seed),
                net,
                opt: Adam::new(config.discriminator_adam),
            }
        });
        Ok(Self {
            opt: Adam::new(config.adam),
            noise: rng::stream(config.seed, streams::NOISE),
            permute: rng::stream(config.seed, streams::PERMUTE),
            model,
            params,
            config,
            disc,
            steps: 0,
        })
    }

    pub fn model(&self) -> &StVae {
        &self.model
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn discriminator_params(&self) -> Option<&ParameterSet> {
        self.disc.as_ref().map(|d| &d.params)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    fn context(&self) -> LossContext<'_> {
        LossContext {
            model: &self.model,
            objective: self.config.objective,
            dataset_size: self.config.dataset_size,
            discriminator: self.disc.as_ref().map(|d| (&d.net, &d.params)),
        }
    }

    fn check_batch(&self, x: &Tensor) -> Result<(), ObjectiveError> {
        let want = self.model.shape.dims();
        if x.ndim() != want.len() + 1 || x.shape()[1..] != want[..] || x.shape()[0] == 0 {
            return Err(ObjectiveError::Shape(format!("batch {:?} for model input {want:?}", x.shape())));
        }
        Ok(())
    }

    /// Loss terms at the current weights for explicit noise `eps [B, d]`, without updating anything.
    pub fn breakdown(&self, x: &Tensor, eps: &Tensor) -> Result<LossBreakdown, ObjectiveError> {
        self.check_batch(x)?;
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        Ok(self.context().forward(&g, &p, x, eps.clone())?.breakdown)
    }

    /// One optimizer step on batch `x`. Nothing is updated when a loss or gradient is not finite.
    pub fn step(&mut self, x: &Tensor) -> Result<LossBreakdown, ObjectiveError> {
        self.check_batch(x)?;
        let (b, d) = (x.shape()[0], self.model.latent_dim());
        let eps = Tensor::new(vec![b, d], normal_vec(&mut self.noise, b * d));
        let g = Graph::new();
        let p = self.params.bind(&g);
        let fwd = self.context().forward(&g, &p, x, eps)?;
        let mut breakdown = fwd.breakdown;
        let non_finite = |what, breakdown: &LossBreakdown, step| ObjectiveError::NonFinite {
            what,
            step,
            breakdown: Box::new(breakdown.clone()),
        };
        if !breakdown.all_finite() {
            return Err(non_finite("loss", &breakdown, self.steps));
        }
        let grads = p.grads(&g.backward(fwd.total));
        if !grads.values().all(Tensor::all_finite) {
            return Err(non_finite("gradient", &breakdown, self.steps));
        }
        let z = fwd.z.value().clone();
        if let Some(disc) = &mut self.disc {
            for _ in 0..self.config.discriminator_steps {
                let z_perm = permute_dims(&z, &mut self.permute);
                let gd = Graph::new();
                let dp = disc.params.bind(&gd);
                let joint = disc.net.logits(&dp, gd.constant(z.clone()));
                let perm = disc.net.logits(&dp, gd.constant(z_perm));
                let in_range = |v: &Var| {
                    v.value().data().iter().all(|&l| {
                        let q = sigmoid(l.clamp(-super::LOGIT_CLAMP, super::LOGIT_CLAMP));
                        q > 0.0 && q < 1.0
                    })
                };
                if !in_range(&joint) || !in_range(&perm) {
                    return Err(ObjectiveError::DiscriminatorRange(self.steps));
                }
                let loss = discriminator_loss(joint, perm);
                breakdown.discriminator_loss = Some(loss.item());
                if !loss.item().is_finite() {
                    return Err(non_finite("discriminator loss", &breakdown, self.steps));
                }
                let dgrads = dp.grads(&gd.backward(loss));
                if !dgrads.values().all(Tensor::all_finite) {
                    return Err(non_finite("discriminator gradient", &breakdown, self.steps));
                }
                disc.opt.update(&mut disc.params, &dgrads);
            }
        }
        self.opt.update(&mut self.params, &grads);
        self.steps += 1;
        Ok(breakdown)
    }
}
