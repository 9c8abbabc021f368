//! Convolutional LSTM encoder and decoder.
//!
//! Gate order along the channel axis of the gate convolution is
//! `[input, forget, output, candidate]`.

use rand::Rng;

use super::layers::{conv, init_conv, init_linear, linear};
use super::{heads, init_heads, pool_factor, EncoderSpec, InputShape, NetError, Posterior};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};

/// One cell update. `x` is `[B, C_in, H, W]` (or absent for an input-free cell),
/// `h` and `c` are `[B, hidden, H, W]`; gates come from `{prefix}.w`, `{prefix}.b`.
pub fn cell_step<'g>(
    p: &Bound<'g>,
    prefix: &str,
    x: Option<Var<'g>>,
    h: Var<'g>,
    c: Var<'g>,
) -> Result<(Var<'g>, Var<'g>), NetError> {
    let (hs, cs) = (h.shape(), c.shape());
    let mismatch = |what: String| Err(NetError::InvalidSpec(format!("convlstm shape mismatch: {what}")));
    if hs.len() != 4 || hs != cs {
        return mismatch(format!("h {hs:?} vs c {cs:?}"));
    }
    if let Some(x) = x {
        let xs = x.shape();
        if xs.len() != 4 || xs[0] != hs[0] || xs[2..] != hs[2..] {
            return mismatch(format!("x {xs:?} vs h {hs:?}"));
        }
    }
    let w = p.var(&format!("{prefix}.w")).shape();
    let expected_in = x.map_or(0, |x| x.shape()[1]) + hs[1];
    if w[0] != 4 * hs[1] || w[1] != expected_in {
        return mismatch(format!("gate weights {w:?} for input {expected_in} and hidden {}", hs[1]));
    }
    Ok(step(p, prefix, x, h, c))
}

fn step<'g>(p: &Bound<'g>, prefix: &str, x: Option<Var<'g>>, h: Var<'g>, c: Var<'g>) -> (Var<'g>, Var<'g>) {
    let hid = h.shape()[1];
    let input = match x {
        Some(x) => Var::concat(&[x, h], 1),
        None => h,
    };
    let gates = conv(p, prefix, input);
    let i = gates.narrow(1, 0, hid).sigmoid();
    let f = gates.narrow(1, hid, hid).sigmoid();
    let o = gates.narrow(1, 2 * hid, hid).sigmoid();
    let g = gates.narrow(1, 3 * hid, hid).tanh();
    let c_next = f * c + i * g;
    let h_next = o * c_next.tanh();
    (h_next, c_next)
}

fn raster_dims(shape: InputShape) -> (usize, usize, usize, usize) {
    match shape {
        InputShape::Raster {
            t_len,
            channels,
            height,
            width,
        } => (t_len, channels, height, width),
        InputShape::Graph { .. } => unreachable!("raster model on graph shape"),
    }
}

pub(crate) fn init(ps: &mut ParameterSet, spec: &EncoderSpec, shape: InputShape, rng: &mut impl Rng) {
    let (_, c, h, w) = raster_dims(shape);
    let (hid, k) = (spec.hidden, spec.kernel);
    let pool = pool_factor(h, w);
    let pooled = hid * (h / pool) * (w / pool);
    init_conv(ps, "enc.cell", c + hid, 4 * hid, k, rng);
    init_heads(ps, pooled, spec.latent_dim, rng);
    init_linear(ps, "dec.in", spec.latent_dim, pooled, rng);
    init_conv(ps, "dec.cell", hid, 4 * hid, k, rng);
    init_conv(ps, "dec.out", hid, c, 1, rng);
}

pub(crate) fn encode<'g>(p: &Bound<'g>, spec: &EncoderSpec, x: Var<'g>) -> Posterior<'g> {
    let s = x.shape();
    let (b, t, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let g = x.graph();
    let zeros = g.constant(crate::Tensor::zeros(&[b, spec.hidden, h, w]));
    let (mut hs, mut cs) = (zeros, zeros);
    for step_t in 0..t {
        let frame = x.narrow(1, step_t, 1).reshape(&[b, c, h, w]);
        (hs, cs) = step(p, "enc.cell", Some(frame), hs, cs);
    }
    let pool = pool_factor(h, w);
    let pooled = if pool > 1 { hs.avg_pool2d(pool) } else { hs };
    let feat = pooled.reshape(&[b, spec.hidden * (h / pool) * (w / pool)]);
    heads(p, feat)
}

pub(crate) fn decode<'g>(p: &Bound<'g>, spec: &EncoderSpec, shape: InputShape, z: Var<'g>) -> Var<'g> {
    let (t, c, h, w) = raster_dims(shape);
    let b = z.shape()[0];
    let hid = spec.hidden;
    let pool = pool_factor(h, w);
    let mut hs = linear(p, "dec.in", z).reshape(&[b, hid, h / pool, w / pool]);
    if pool > 1 {
        hs = hs.upsample2d(pool);
    }
    let mut cs = z.graph().constant(crate::Tensor::zeros(&[b, hid, h, w]));
    let mut frames = Vec::with_capacity(t);
    for _ in 0..t {
        (hs, cs) = step(p, "dec.cell", None, hs, cs);
        frames.push(conv(p, "dec.out", hs).reshape(&[b, 1, c, h, w]));
    }
    Var::concat(&frames, 1)
}
