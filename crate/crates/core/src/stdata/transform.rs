//! Layout transforms and min-max scaling.

use serde::{Deserialize, Serialize};

use super::{DataError, GraphSequence, RasterSequence};

/// Folds time into channels: output `[0, t*C + c, h, w]` equals input `[t, c, h, w]`.
pub fn time_to_channels(r: &RasterSequence) -> RasterSequence {
    // [t, c, h, w] and [0, t*C + c, h, w] share one row-major layout.
    let mut out = r.clone();
    out.channels = r.t_len * r.channels;
    out.t_len = 1;
    out.dt = r.dt * r.t_len as f64;
    out
}

/// Inverse of [`time_to_channels`] for a known frame count.
pub fn channels_to_time(r: &RasterSequence, t_len: usize) -> Result<RasterSequence, DataError> {
    if r.t_len != 1 || t_len == 0 || !r.channels.is_multiple_of(t_len) {
        return Err(DataError::InvalidShape(format!(
            "cannot unfold {} channels (t_len {}) into {t_len} frames",
            r.channels, r.t_len
        )));
    }
    let mut out = r.clone();
    out.channels = r.channels / t_len;
    out.t_len = t_len;
    out.dt = r.dt / t_len as f64;
    Ok(out)
}

/// Anything carrying a flat `f32` payload that can be rescaled.
pub trait Signal: Sized {
    fn signal(&self) -> &[f32];
    fn with_signal(&self, values: Vec<f32>) -> Self;
}

impl Signal for RasterSequence {
    fn signal(&self) -> &[f32] {
        self.values()
    }

    fn with_signal(&self, values: Vec<f32>) -> Self {
        RasterSequence::new(self.t_len, self.channels, self.height, self.width, values)
            .map(|mut r| {
                r.dt = self.dt;
                r
            })
            .expect("rescaling preserves shape")
    }
}

impl Signal for GraphSequence {
    fn signal(&self) -> &[f32] {
        self.values()
    }

    fn with_signal(&self, values: Vec<f32>) -> Self {
        GraphSequence::new(
            self.t_len,
            self.features,
            values,
            self.adjacency.clone(),
            self.node_ids.clone(),
        )
        .expect("rescaling preserves shape")
    }
}

/// Global min and max fitted on a training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub min: f64,
    pub max: f64,
}

impl ScaleRecord {
    pub fn fit<S: Signal>(train: &[S]) -> Result<Self, DataError> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in train {
            for &v in s.signal() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite);
                }
                min = min.min(v as f64);
                max = max.max(v as f64);
            }
        }
        if !min.is_finite() {
            return Err(DataError::InvalidShape("no values to fit a scale on".into()));
        }
        if max <= min {
            return Err(DataError::ConstantSignal(min));
        }
        Ok(Self { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale_value(&self, v: f64) -> f64 {
        (v - self.min) / self.range()
    }

    pub fn unscale_value(&self, v: f64) -> f64 {
        v * self.range() + self.min
    }

    pub fn apply<S: Signal>(&self, s: &S) -> S {
        s.with_signal(s.signal().iter().map(|&v| self.scale_value(v as f64) as f32).collect())
    }
}

/// Fits a scale on `train` and applies it to every sample there.
pub fn normalize_minmax<S: Signal>(train: &[S]) -> Result<(Vec<S>, ScaleRecord), DataError> {
    let record = ScaleRecord::fit(train)?;
    Ok((train.iter().map(|s| record.apply(s)).collect(), record))
}

pub fn denormalize<S: Signal>(s: &S, record: &ScaleRecord) -> S {
    s.with_signal(s.signal().iter().map(|&v| record.unscale_value(v as f64) as f32).collect())
}
