//! Parameter-creating helpers shared by the architectures.

use rand::Rng;

use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};

/// `{name}.w [input, output]` and `{name}.b [output]`.
pub fn init_linear(ps: &mut ParameterSet, name: &str, input: usize, output: usize, rng: &mut impl Rng) {
    ps.init_uniform(format!("{name}.w"), &[input, output], input, rng);
    ps.init_zeros(format!("{name}.b"), &[output]);
}

/// Affine map over the last axis of `x`, any leading shape.
pub fn linear<'g>(p: &Bound<'g>, name: &str, x: Var<'g>) -> Var<'g> {
    let w = p.var(&format!("{name}.w"));
    let b = p.var(&format!("{name}.b"));
    let shape = x.shape();
    let (input, output) = (shape[shape.len() - 1], w.shape()[1]);
    if shape.len() == 2 {
        return x.matmul(w) + b;
    }
    let lead: usize = shape[..shape.len() - 1].iter().product();
    let mut out_shape = shape.clone();
    *out_shape.last_mut().unwrap() = output;
    (x.reshape(&[lead, input]).matmul(w) + b).reshape(&out_shape)
}

/// `{name}.w [c_out, c_in, k, k]` and `{name}.b [c_out]`.
pub fn init_conv(ps: &mut ParameterSet, name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut impl Rng) {
    ps.init_uniform(format!("{name}.w"), &[c_out, c_in, kernel, kernel], c_in * kernel * kernel, rng);
    ps.init_zeros(format!("{name}.b"), &[c_out]);
}

pub fn conv<'g>(p: &Bound<'g>, name: &str, x: Var<'g>) -> Var<'g> {
    x.conv2d(p.var(&format!("{name}.w")), p.var(&format!("{name}.b")))
}
