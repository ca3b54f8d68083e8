//! Procedural side-scan-like test scenes, for benchmarks that need a clean
//! reference.
//!
//! The scene has a dark water-column strip along the left edge, seabed
//! backscatter that fades with range and carries sand-ripple texture, and
//! a handful of bright targets (a hull and scattered boulders) each
//! casting a dark acoustic shadow away from the sensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::GrayImage;

struct Target {
    cx: f64,
    cy: f64,
    half_len: f64,
    half_wid: f64,
    angle: f64,
    brightness: f64,
}

impl Target {
    /// Signed-ish test in the target frame: `Some((u, v))` when inside.
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (dx * c + dy * s, -dx * s + dy * c)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        (u / self.half_len).powi(2) + (v / self.half_wid).powi(2) <= 1.0
    }
}

/// Generates a `width x height` scene; the same seed gives the same scene.
pub fn sonar_scene(width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let scale = w.min(h);
    let nadir = (0.06 * w).max(1.0);

    let mut targets = vec![Target {
        cx: rng.random_range(0.35..0.6) * w,
        cy: rng.random_range(0.3..0.7) * h,
        half_len: 0.22 * scale,
        half_wid: 0.06 * scale,
        angle: rng.random_range(-0.6..0.6),
        brightness: 0.88,
    }];
    for _ in 0..5 {
        let r = rng.random_range(0.015..0.04) * scale;
        targets.push(Target {
            cx: rng.random_range(0.2..0.9) * w,
            cy: rng.random_range(0.05..0.95) * h,
            half_len: r,
            half_wid: r,
            angle: 0.0,
            brightness: rng.random_range(0.7..0.95),
        });
    }
    let ripple_angle: f64 = rng.random_range(0.3..1.2);
    let ripple_period = 0.09 * scale;
    let (rs, rc) = ripple_angle.sin_cos();

    GrayImage::from_fn(width, height, |px, py| {
        let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
        if x < nadir {
            return 0.04;
        }
        let range = (x - nadir) / (w - nadir);
        let ripple = ((x * rc + y * rs) * std::f64::consts::TAU / ripple_period).sin();
        let patch = (x / scale * 5.0).sin() * (y / scale * 3.0).cos();
        let mut v = 0.55 - 0.25 * range + 0.05 * ripple + 0.06 * patch;
        for t in &targets {
            if t.contains(x, y) {
                let (u, _) = t.local(x, y);
                // hull structure: faint ribs along its length
                let ribs = if t.half_len > t.half_wid {
                    0.06 * (u / t.half_len * 18.0).sin()
                } else {
                    0.0
                };
                return (t.brightness + ribs).clamp(0.0, 1.0);
            }
        }
        // shadow: a target between the sensor (left) and this pixel, within
        // a shadow length proportional to range
        for t in &targets {
            let reach = t.half_len.max(t.half_wid) * (1.2 + 2.0 * range);
            for k in 1..=8 {
                let back = reach * k as f64 / 8.0;
                if x - back > nadir && t.contains(x - back, y) {
                    v = 0.06 + 0.04 * (back / reach);
                    return v.clamp(0.0, 1.0);
                }
            }
        }
        v.clamp(0.0, 1.0)
    })
}
