//! Downstream predictor: two rectified hidden layers.

use rand::Rng;

use super::layers::{init_linear, linear};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};

pub const DEFAULT_WIDTH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Mlp {
    pub fn new(input: usize, output: usize) -> Self {
        Self {
            input,
            hidden: DEFAULT_WIDTH,
            output,
        }
    }

    pub fn init(&self, ps: &mut ParameterSet, rng: &mut impl Rng) {
        init_linear(ps, "mlp.l0", self.input, self.hidden, rng);
        init_linear(ps, "mlp.l1", self.hidden, self.hidden, rng);
        init_linear(ps, "mlp.l2", self.hidden, self.output, rng);
    }

    /// `x [B, input]` to `[B, output]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let h = linear(p, "mlp.l0", x).relu();
        let h = linear(p, "mlp.l1", h).relu();
        linear(p, "mlp.l2", h)
    }
}
