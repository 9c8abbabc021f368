//! Moving Gaussian blobs on a torus.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, FactorTable, RasterSequence};
use crate::rng;

/// Factor grids and geometry for [`generate_moving_blobs`].
///
/// Each sample draws one level of every factor uniformly at random, plus an
/// integer start position, which is recorded as the `start_x` / `start_y` factors.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RasterGenConfig {
    pub height: usize,
    pub width: usize,
    pub t_len: usize,
    pub n_samples: usize,
    pub velocity_x: Vec<f64>,
    pub velocity_y: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub blob_width: Vec<f64>,
}

impl Default for RasterGenConfig {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            t_len: 11,
            n_samples: 512,
            velocity_x: vec![-1.0, 0.0, 1.0],
            velocity_y: vec![-1.0, 0.0, 1.0],
            amplitude: vec![0.5, 1.0],
            blob_width: vec![0.8, 1.4],
        }
    }
}

impl RasterGenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.height < 8 || self.width < 8 {
            return bad(format!("grid must be at least 8x8, got {}x{}", self.height, self.width));
        }
        if self.t_len < 4 {
            return bad(format!("t_len must be >= 4, got {}", self.t_len));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be >= 1".into());
        }
        for (name, grid) in [
            ("velocity_x", &self.velocity_x),
            ("velocity_y", &self.velocity_y),
            ("amplitude", &self.amplitude),
            ("blob_width", &self.blob_width),
        ] {
            if grid.len() < 2 {
                return bad(format!("factor grid {name} needs >= 2 levels"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(format!("factor grid {name} has non-finite values"));
            }
        }
        if self.amplitude.iter().any(|&a| a <= 0.0) {
            return bad("amplitude levels must be positive".into());
        }
        if self.blob_width.iter().any(|&w| w <= 0.0) {
            return bad("blob_width levels must be positive".into());
        }
        Ok(())
    }

    pub fn factor_names() -> Vec<String> {
        ["velocity_x", "velocity_y", "amplitude", "blob_width", "start_x", "start_y"]
            .map(String::from)
            .to_vec()
    }
}

/// Blob center at step `t`, wrapped onto `[0, width) x [0, height)`.
pub fn blob_center(start: (f64, f64), velocity: (f64, f64), t: f64, height: usize, width: usize) -> (f64, f64) {
    (
        (start.0 + velocity.0 * t).rem_euclid(width as f64),
        (start.1 + velocity.1 * t).rem_euclid(height as f64),
    )
}

/// Signed shortest displacement from `b` to `a` on a circle of length `period`.
fn wrapped(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    if d > period / 2.0 {
        d - period
    } else {
        d
    }
}

/// One `height x width` frame (row-major, `[h][w]`) of an isotropic Gaussian at `center = (x, y)`.
pub fn render_blob_frame(center: (f64, f64), amplitude: f64, blob_width: f64, height: usize, width: usize) -> Vec<f32> {
    let two_s2 = 2.0 * blob_width * blob_width;
    let mut frame = Vec::with_capacity(height * width);
    for y in 0..height {
        let dy = wrapped(y as f64, center.1, height as f64);
        for x in 0..width {
            let dx = wrapped(x as f64, center.0, width as f64);
            frame.push((amplitude * (-(dx * dx + dy * dy) / two_s2).exp()) as f32);
        }
    }
    frame
}

/// Generates `n_samples` single-channel blob sequences and their factor table.
pub fn generate_moving_blobs(config: &RasterGenConfig, seed: u64) -> Result<(Vec<RasterSequence>, FactorTable), DataError> {
    config.validate()?;
    let (h, w) = (config.height, config.width);
    let mut rng = rng::stream(seed, 0);
    let levels = vec![
        config.velocity_x.len(),
        config.velocity_y.len(),
        config.amplitude.len(),
        config.blob_width.len(),
        w,
        h,
    ];
    let mut factors = FactorTable::new(RasterGenConfig::factor_names(), levels.clone());
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let row: Vec<usize> = levels.iter().map(|&k| rng.random_range(0..k)).collect();
        let vel = (config.velocity_x[row[0]], config.velocity_y[row[1]]);
        let amp = config.amplitude[row[2]];
        let bw = config.blob_width[row[3]];
        let start = (row[4] as f64, row[5] as f64);
        let mut values = Vec::with_capacity(config.t_len * h * w);
        for t in 0..config.t_len {
            let c = blob_center(start, vel, t as f64, h, w);
            values.extend(render_blob_frame(c, amp, bw, h, w));
        }
        samples.push(RasterSequence::new(config.t_len, 1, h, w, values)?);
        factors.push(row);
    }
    Ok((samples, factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn argmax(frame: &[f32], width: usize) -> (usize, usize) {
        let i = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        (i % width, i / width)
    }

    #[test]
    fn center_moves_and_peak_follows() {
        let c = blob_center((3.0, 3.0), (2.0, 0.0), 5.0, 16, 16);
        assert_eq!(c, (13.0, 3.0));
        let frame = render_blob_frame(c, 1.0, 1.0, 16, 16);
        assert_eq!(argmax(&frame, 16), (13, 3));
    }

    #[test]
    fn center_wraps_toroidally() {
        assert_eq!(blob_center((14.0, 1.0), (2.0, -1.0), 2.0, 16, 16), (2.0, 15.0));
    }

    #[test]
    fn zero_velocity_frames_identical() {
        let cfg = RasterGenConfig {
            velocity_x: vec![0.0, 0.0],
            velocity_y: vec![0.0, 0.0],
            ..Default::default()
        };
        let (samples, _) = generate_moving_blobs(&cfg, 4).unwrap();
        for s in &samples {
            let f0 = s.frames(0, 1);
            for t in 1..s.t_len {
                assert_eq!(s.frames(t, 1).values(), f0.values());
            }
        }
    }

    #[test]
    fn zero_amplitude_frame_is_zero() {
        let f = render_blob_frame((3.0, 4.0), 0.0, 1.0, 8, 8);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_grids() {
        let mut cfg = RasterGenConfig::default();
        cfg.amplitude = vec![0.0, 1.0];
        assert!(generate_moving_blobs(&cfg, 0).is_err());
        let mut cfg = RasterGenConfig::default();
        cfg.blob_width = vec![-1.0, 1.0];
        assert!(generate_moving_blobs(&cfg, 0).is_err());
        let mut cfg = RasterGenConfig::default();
        cfg.velocity_x = vec![1.0];
        assert!(generate_moving_blobs(&cfg, 0).is_err());
        let mut cfg = RasterGenConfig::default();
        cfg.height = 7;
        assert!(generate_moving_blobs(&cfg, 0).is_err());
        let mut cfg = RasterGenConfig::default();
        cfg.t_len = 3;
        assert!(generate_moving_blobs(&cfg, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = RasterGenConfig {
            n_samples: 20,
            ..Default::default()
        };
        let a = generate_moving_blobs(&cfg, 11).unwrap();
        let b = generate_moving_blobs(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_moving_blobs(&cfg, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn factor_table_has_one_row_per_sample() {
        let cfg = RasterGenConfig {
            n_samples: 37,
            ..Default::default()
        };
        let (samples, table) = generate_moving_blobs(&cfg, 2).unwrap();
        assert_eq!(table.len(), samples.len());
        for row in table.rows() {
            for (v, k) in row.iter().zip(table.levels()) {
                assert!(v < k);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn argmax_tracks_closed_form_center(seed in 0u64..1000, h in 8usize..14, w in 8usize..14) {
            let cfg = RasterGenConfig {
                height: h,
                width: w,
                t_len: 6,
                n_samples: 4,
                velocity_x: vec![-2.0, 1.0, 3.0],
                velocity_y: vec![-1.0, 0.0, 2.0],
                amplitude: vec![0.3, 1.0],
                blob_width: vec![0.7, 1.5],
            };
            let (samples, table) = generate_moving_blobs(&cfg, seed).unwrap();
            for (s, row) in samples.iter().zip(table.rows()) {
                let vel = (cfg.velocity_x[row[0]], cfg.velocity_y[row[1]]);
                for t in 0..s.t_len {
                    let (cx, cy) = blob_center((row[4] as f64, row[5] as f64), vel, t as f64, h, w);
                    let frame = s.frames(t, 1);
                    let peak = argmax(frame.values(), w);
                    prop_assert_eq!(peak, (cx.round() as usize % w, cy.round() as usize % h));
                }
            }
        }
    }
}
