//! Density-ratio discriminator on latent codes: four affine layers, leaky
//! rectifiers, one logit for "drawn from the joint".

use rand::Rng;

use super::layers::{init_linear, linear};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};

pub const WIDTH: usize = 64;
pub const LEAK: f64 = 0.2;
const LAYERS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub latent_dim: usize,
    pub width: usize,
}

impl Discriminator {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            width: WIDTH,
        }
    }

    pub fn init_params(&self, seed: u64) -> ParameterSet {
        let mut ps = ParameterSet::new(seed);
        let mut rng = crate::rng::stream(seed, crate::rng::streams::DISCRIMINATOR);
        self.init(&mut ps, &mut rng);
        ps
    }

    pub fn init(&self, ps: &mut ParameterSet, rng: &mut impl Rng) {
        for l in 0..LAYERS {
            let input = if l == 0 { self.latent_dim } else { self.width };
            let output = if l == LAYERS - 1 { 1 } else { self.width };
            init_linear(ps, &format!("disc.l{l}"), input, output, rng);
        }
    }

    /// `z [B, d]` to logits `[B]`.
    pub fn logits<'g>(&self, p: &Bound<'g>, z: Var<'g>) -> Var<'g> {
        let mut h = z;
        for l in 0..LAYERS {
            h = linear(p, &format!("disc.l{l}"), h);
            if l < LAYERS - 1 {
                h = h.leaky_relu(LEAK);
            }
        }
        let b = h.shape()[0];
        h.reshape(&[b])
    }
}
