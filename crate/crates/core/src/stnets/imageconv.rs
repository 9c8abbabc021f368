//! Convolutional encoder/decoder that folds time into channels and so sees
//! each sequence as a single multi-channel image.

use rand::Rng;

use super::layers::{conv, init_conv, init_linear, linear};
use super::{heads, init_heads, pool_factor, EncoderKind, EncoderSpec, InputShape, Posterior, StVae};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};

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
    let (t, c, h, w) = raster_dims(shape);
    let (hid, k) = (spec.hidden, spec.kernel);
    let pool = pool_factor(h, w);
    let pooled = hid * (h / pool) * (w / pool);
    init_conv(ps, "enc.in", t * c, hid, k, rng);
    init_conv(ps, "enc.mid", hid, hid, k, rng);
    init_heads(ps, pooled, spec.latent_dim, rng);
    init_linear(ps, "dec.in", spec.latent_dim, pooled, rng);
    init_conv(ps, "dec.mid", hid, hid, k, rng);
    init_conv(ps, "dec.out", hid, t * c, k, rng);
}

pub(crate) fn encode<'g>(p: &Bound<'g>, spec: &EncoderSpec, x: Var<'g>) -> Posterior<'g> {
    let s = x.shape();
    let (b, t, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let y = conv(p, "enc.in", x.reshape(&[b, t * c, h, w])).relu();
    let mut y = conv(p, "enc.mid", y).relu();
    let pool = pool_factor(h, w);
    if pool > 1 {
        y = y.avg_pool2d(pool);
    }
    heads(p, y.reshape(&[b, spec.hidden * (h / pool) * (w / pool)]))
}

pub(crate) fn decode<'g>(p: &Bound<'g>, spec: &EncoderSpec, shape: InputShape, z: Var<'g>) -> Var<'g> {
    let (t, c, h, w) = raster_dims(shape);
    let b = z.shape()[0];
    let pool = pool_factor(h, w);
    let mut y = linear(p, "dec.in", z).reshape(&[b, spec.hidden, h / pool, w / pool]);
    if pool > 1 {
        y = y.upsample2d(pool);
    }
    let y = conv(p, "dec.mid", y.relu()).relu();
    conv(p, "dec.out", y).reshape(&[b, t, c, h, w])
}

/// The hidden width whose parameter count is closest to `target`.
pub fn matched_hidden(spec: &EncoderSpec, shape: InputShape, target: usize) -> usize {
    let count = |hid: usize| {
        let mut s = spec.clone();
        s.kind = EncoderKind::ImageConv;
        s.hidden = hid;
        StVae::new(s, shape, None).expect("raster shape").init_params(0).count()
    };
    (1..=256)
        .min_by_key(|&hid| count(hid).abs_diff(target))
        .unwrap()
}
