//! Three-fragment residual encoder (recent, periodic and trend frames).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{conv, init_conv, init_linear, linear};
use super::{heads, init_heads, pool_factor, EncoderSpec, InputShape, NetError, Posterior};
use crate::autograd::Var;
use crate::params::{Bound, ParameterSet};
use crate::Tensor;

/// Fragment lags: the last `closeness` frames, plus `period_len` frames at
/// stride `period` and at stride `trend`, both ending at the last frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StLags {
    pub closeness: usize,
    pub period_len: usize,
    pub period: usize,
    pub trend: usize,
}

impl Default for StLags {
    fn default() -> Self {
        Self {
            closeness: 3,
            period_len: 2,
            period: 8,
            trend: 16,
        }
    }
}

pub(crate) const FRAGMENTS: [&str; 3] = ["close", "period", "trend"];

impl StLags {
    /// The default lags when they fit in `t_len` frames, otherwise lags
    /// rescaled so that the trend fragment spans the whole sequence.
    pub fn for_length(t_len: usize) -> Self {
        let d = Self::default();
        if d.validate(t_len).is_ok() {
            return d;
        }
        let t = t_len.max(1);
        Self {
            closeness: t.min(3),
            period_len: if t >= 2 { 2 } else { 1 },
            period: ((t - 1) / 2).max(1),
            trend: (t - 1).max(1),
        }
    }

    pub fn validate(&self, t_len: usize) -> Result<(), NetError> {
        let too_short = |reason: String| Err(NetError::SequenceTooShort { t_len, reason });
        if self.closeness == 0 || self.period_len == 0 || self.period == 0 || self.trend == 0 {
            return Err(NetError::InvalidSpec(format!("lags must be positive: {self:?}")));
        }
        if self.closeness > t_len {
            return too_short(format!("closeness needs {} frames", self.closeness));
        }
        let span = (self.period_len - 1) * self.period.max(self.trend);
        if span >= t_len {
            return too_short(format!("periodic fragments span {} frames", span + 1));
        }
        Ok(())
    }

    pub fn closeness_indices(&self, t_len: usize) -> Vec<usize> {
        (t_len - self.closeness..t_len).collect()
    }

    fn strided(&self, t_len: usize, stride: usize) -> Vec<usize> {
        (0..self.period_len).rev().map(|i| t_len - 1 - i * stride).collect()
    }

    pub fn period_indices(&self, t_len: usize) -> Vec<usize> {
        self.strided(t_len, self.period)
    }

    pub fn trend_indices(&self, t_len: usize) -> Vec<usize> {
        self.strided(t_len, self.trend)
    }

    pub(crate) fn fragments(&self, t_len: usize) -> [Vec<usize>; 3] {
        [
            self.closeness_indices(t_len),
            self.period_indices(t_len),
            self.trend_indices(t_len),
        ]
    }
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

pub(crate) fn init(ps: &mut ParameterSet, spec: &EncoderSpec, shape: InputShape, lags: StLags, rng: &mut impl Rng) {
    let (t, c, h, w) = raster_dims(shape);
    let (hid, k) = (spec.hidden, spec.kernel);
    for (name, idx) in FRAGMENTS.iter().zip(lags.fragments(t)) {
        init_conv(ps, &format!("enc.{name}.in"), idx.len() * c, hid, k, rng);
        for u in 0..spec.residual_units {
            init_conv(ps, &format!("enc.{name}.res{u}.a"), hid, hid, k, rng);
            init_conv(ps, &format!("enc.{name}.res{u}.b"), hid, hid, k, rng);
        }
        ps.insert(format!("enc.fuse.{name}"), Tensor::ones(&[1]));
    }
    let pool = pool_factor(h, w);
    let pooled = hid * (h / pool) * (w / pool);
    init_heads(ps, pooled, spec.latent_dim, rng);
    init_linear(ps, "dec.in", spec.latent_dim, pooled, rng);
    init_conv(ps, "dec.mid", hid, hid, k, rng);
    init_conv(ps, "dec.out", hid, t * c, k, rng);
}

/// `x + conv_b(relu(conv_a(relu(x))))`.
fn residual<'g>(p: &Bound<'g>, prefix: &str, x: Var<'g>) -> Var<'g> {
    let inner = conv(p, &format!("{prefix}.a"), x.relu());
    x + conv(p, &format!("{prefix}.b"), inner.relu())
}

pub(crate) fn encode<'g>(p: &Bound<'g>, spec: &EncoderSpec, lags: StLags, x: Var<'g>) -> Posterior<'g> {
    let s = x.shape();
    let (b, t, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let mut fused: Option<Var<'g>> = None;
    for (name, idx) in FRAGMENTS.iter().zip(lags.fragments(t)) {
        let frag = x.select(1, &idx).reshape(&[b, idx.len() * c, h, w]);
        let mut y = conv(p, &format!("enc.{name}.in"), frag);
        for u in 0..spec.residual_units {
            y = residual(p, &format!("enc.{name}.res{u}"), y);
        }
        let term = y * p.var(&format!("enc.fuse.{name}"));
        fused = Some(match fused {
            Some(acc) => acc + term,
            None => term,
        });
    }
    let pool = pool_factor(h, w);
    let mut feat = fused.unwrap().relu();
    if pool > 1 {
        feat = feat.avg_pool2d(pool);
    }
    heads(p, feat.reshape(&[b, spec.hidden * (h / pool) * (w / pool)]))
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
