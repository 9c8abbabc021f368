//! Diffusion-convolutional GRU encoder and decoder.

use std::rc::Rc;

use rand::Rng;

use super::layers::{init_linear, linear};
use super::{heads, init_heads, EncoderSpec, GraphOperators, InputShape, NetError, Posterior};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};
use crate::Tensor;

/// Forward and backward random-walk operators.
#[derive(Clone, Debug)]
pub struct Walks {
    pub forward: Rc<Tensor>,
    pub backward: Rc<Tensor>,
}

impl Walks {
    pub fn new(ops: &GraphOperators) -> Self {
        Self {
            forward: Rc::new(ops.forward_walk.clone()),
            backward: Rc::new(ops.backward_walk.clone()),
        }
    }
}

/// `X theta_0 + sum_s (P_f^s X) theta_s^f + (P_b^s X) theta_s^b + b` for `x [.., N, c]`,
/// with `theta [1 + 2S, c, out]` ordered `[theta_0, forward.., backward..]`.
pub fn diffusion_conv<'g>(x: Var<'g>, walks: &Walks, theta: Var<'g>, bias: Var<'g>) -> Var<'g> {
    let ts = theta.shape();
    let (terms_n, c, out) = (ts[0], ts[1], ts[2]);
    let steps = (terms_n - 1) / 2;
    let mut terms = Vec::with_capacity(terms_n);
    terms.push(x);
    for op in [&walks.forward, &walks.backward] {
        let mut cur = x;
        for _ in 0..steps {
            cur = cur.node_mix(op);
            terms.push(cur);
        }
    }
    let nd = x.shape().len();
    let stacked = if terms.len() == 1 { x } else { Var::concat(&terms, nd - 1) };
    let s = stacked.shape();
    let lead: usize = s[..nd - 1].iter().product();
    let mut out_shape = s.clone();
    out_shape[nd - 1] = out;
    (stacked.reshape(&[lead, terms_n * c]).matmul(theta.reshape(&[terms_n * c, out])) + bias).reshape(&out_shape)
}

/// One GRU update with diffusion convolutions; `x [B, N, F]` (absent for an
/// input-free cell) and `h [B, N, hidden]`. Reads `{prefix}.gates.*` and `{prefix}.cand.*`.
pub fn cell_step<'g>(p: &Bound<'g>, prefix: &str, x: Option<Var<'g>>, h: Var<'g>, walks: &Walks) -> Result<Var<'g>, NetError> {
    let hs = h.shape();
    let n = walks.forward.shape()[0];
    if hs.len() != 3 || hs[1] != n {
        return Err(NetError::InvalidSpec(format!("state {hs:?} on {n} nodes")));
    }
    if let Some(x) = x {
        let xs = x.shape();
        if xs.len() != 3 || xs[..2] != hs[..2] {
            return Err(NetError::InvalidSpec(format!("input {xs:?} vs state {hs:?}")));
        }
    }
    let w = p.var(&format!("{prefix}.gates.w")).shape();
    let c_in = x.map_or(0, |x| x.shape()[2]) + hs[2];
    if w[1] != c_in || w[2] != 2 * hs[2] || w[0] % 2 != 1 {
        return Err(NetError::InvalidSpec(format!("gate weights {w:?} for input {c_in}")));
    }
    Ok(step(p, prefix, x, h, walks))
}

fn step<'g>(p: &Bound<'g>, prefix: &str, x: Option<Var<'g>>, h: Var<'g>, walks: &Walks) -> Var<'g> {
    let hid = h.shape()[2];
    let v = |s: &str| p.var(&format!("{prefix}.{s}"));
    let with_input = |state: Var<'g>| match x {
        Some(x) => Var::concat(&[x, state], 2),
        None => state,
    };
    let gates = diffusion_conv(with_input(h), walks, v("gates.w"), v("gates.b")).sigmoid();
    let r = gates.narrow(2, 0, hid);
    let u = gates.narrow(2, hid, hid);
    let c = diffusion_conv(with_input(r * h), walks, v("cand.w"), v("cand.b")).tanh();
    // u * h + (1 - u) * c
    u * h + c - u * c
}

fn graph_dims(shape: InputShape) -> (usize, usize, usize) {
    match shape {
        InputShape::Graph { t_len, n_nodes, features } => (t_len, n_nodes, features),
        InputShape::Raster { .. } => unreachable!("graph model on raster shape"),
    }
}

/// Parameters of one cell with `c_in` input features.
pub fn init_cell(ps: &mut ParameterSet, prefix: &str, c_in: usize, hidden: usize, steps: usize, rng: &mut impl Rng) {
    let terms = 1 + 2 * steps;
    let fan_in = terms * (c_in + hidden);
    ps.init_uniform(format!("{prefix}.gates.w"), &[terms, c_in + hidden, 2 * hidden], fan_in, rng);
    ps.init_zeros(format!("{prefix}.gates.b"), &[2 * hidden]);
    ps.init_uniform(format!("{prefix}.cand.w"), &[terms, c_in + hidden, hidden], fan_in, rng);
    ps.init_zeros(format!("{prefix}.cand.b"), &[hidden]);
}

pub(crate) fn init(ps: &mut ParameterSet, spec: &EncoderSpec, shape: InputShape, rng: &mut impl Rng) {
    let (_, n, f) = graph_dims(shape);
    let (hid, s) = (spec.hidden, spec.diffusion_steps);
    init_cell(ps, "enc.cell", f, hid, s, rng);
    init_heads(ps, n * hid, spec.latent_dim, rng);
    init_linear(ps, "dec.in", spec.latent_dim, n * hid, rng);
    init_cell(ps, "dec.cell", 0, hid, s, rng);
    init_linear(ps, "dec.out", hid, f, rng);
}

pub(crate) fn encode<'g>(p: &Bound<'g>, spec: &EncoderSpec, walks: &Walks, x: Var<'g>) -> Posterior<'g> {
    let s = x.shape();
    let (b, t, n, f) = (s[0], s[1], s[2], s[3]);
    let mut h = x.graph().constant(Tensor::zeros(&[b, n, spec.hidden]));
    for ti in 0..t {
        let frame = x.narrow(1, ti, 1).reshape(&[b, n, f]);
        h = step(p, "enc.cell", Some(frame), h, walks);
    }
    heads(p, h.reshape(&[b, n * spec.hidden]))
}

pub(crate) fn decode<'g>(p: &Bound<'g>, spec: &EncoderSpec, shape: InputShape, walks: &Walks, z: Var<'g>) -> Var<'g> {
    let (t, n, f) = graph_dims(shape);
    let b = z.shape()[0];
    let mut h = linear(p, "dec.in", z).reshape(&[b, n, spec.hidden]);
    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        h = step(p, "dec.cell", None, h, walks);
        frames.push(linear(p, "dec.out", h).reshape(&[b, 1, n, f]));
    }
    Var::concat(&frames, 1)
}
