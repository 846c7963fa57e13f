//! Procedural solid textures evaluated in object-local coordinates.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

fn hash(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [ix, iy, iz] {
        h = (h ^ v as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Lattice value noise in [0, 1] with C² interpolation.
pub fn value_noise(p: Vector3<f64>, seed: u64) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (tx, ty, tz) = (smooth(p.x - fx), smooth(p.y - fy), smooth(p.z - fz));
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let mut c = [0.0; 8];
    for (k, v) in c.iter_mut().enumerate() {
        *v = hash(
            ix + (k & 1) as i64,
            iy + ((k >> 1) & 1) as i64,
            iz + (k >> 2) as i64,
            seed,
        );
    }
    let x00 = lerp(c[0], c[1], tx);
    let x10 = lerp(c[2], c[3], tx);
    let x01 = lerp(c[4], c[5], tx);
    let x11 = lerp(c[6], c[7], tx);
    lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
}

/// Three octaves of value noise, in [0, 1].
pub fn fbm(p: Vector3<f64>, seed: u64) -> f64 {
    let mut sum = 0.0;
    let mut amp = 0.5;
    let mut q = p;
    for octave in 0..3 {
        sum += amp * value_noise(q, seed.wrapping_add(octave));
        q *= 2.03;
        amp *= 0.5;
    }
    sum / 0.875
}

/// A checker whose cell edges are smoothed so bilinear resampling stays
/// faithful; in [0, 1].
pub fn soft_checker(p: Vector3<f64>) -> f64 {
    use std::f64::consts::PI;
    let s = (PI * p.x).sin() * (PI * p.y).sin() * (PI * p.z).sin();
    0.5 + 0.5 * (2.5 * s).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Texture {
    pub base: [f32; 3],
    pub accent: [f32; 3],
    /// Checker cell size in world units.
    pub period: f64,
    /// Weight of the noise layer in [0, 1].
    pub noise: f64,
    pub seed: u64,
}

impl Texture {
    /// Albedo at local point `p`. `footprint` is the world-space size of
    /// one pixel there; detail finer than that fades to the mean colour.
    pub fn albedo(&self, p: Vector3<f64>, footprint: f64) -> [f32; 3] {
        let q = p / self.period;
        let detail = (1.0 - 2.0 * footprint / self.period).clamp(0.0, 1.0);
        let checker = 0.5 + (soft_checker(q + Vector3::new(0.25, 0.25, 0.25)) - 0.5) * detail;
        let noise = 0.5 + (fbm(q * 1.7, self.seed) - 0.5) * detail;
        let t = ((1.0 - self.noise) * checker + self.noise * noise) as f32;
        [0, 1, 2].map(|c| self.base[c] + (self.accent[c] - self.base[c]) * t)
    }
}
