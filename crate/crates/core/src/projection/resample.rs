use rayon::prelude::*;

use super::Projection;
use crate::error::{Error, Result};
use crate::raster::Image;

/// Bilinear lookups on an image laid out by a projection: longitude-periodic
/// x for wrapping charts, clamped edges otherwise, dead pixels excluded.
pub struct ImageSampler<'a> {
    img: &'a Image,
    period: Option<usize>,
    alive: Option<Vec<bool>>,
}

impl<'a> ImageSampler<'a> {
    pub fn new(img: &'a Image, proj: &dyn Projection) -> Self {
        let (w, h) = (proj.width(), proj.height());
        let mut any_dead = false;
        let alive: Vec<bool> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                let a = proj.pixel_info(x, y).is_some();
                any_dead |= !a;
                a
            })
            .collect();
        ImageSampler {
            img,
            period: proj.x_period().map(|p| p as usize),
            alive: any_dead.then_some(alive),
        }
    }

    /// Writes the interpolated value into `out`; returns false if every tap was dead.
    pub fn sample(&self, px: f64, py: f64, out: &mut [f32]) -> bool {
        let (w, h, c) = (self.img.width, self.img.height, self.img.channels);
        let x0 = px.floor();
        let y0 = py.floor();
        let fx = px - x0;
        let fy = py - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let xi = |x: i64| -> usize {
            match self.period {
                Some(p) => x.rem_euclid(p as i64) as usize,
                None => x.clamp(0, w as i64 - 1) as usize,
            }
        };
        let yi = |y: i64| y.clamp(0, h as i64 - 1) as usize;
        let taps = [
            (xi(x0), yi(y0), (1.0 - fx) * (1.0 - fy)),
            (xi(x0 + 1), yi(y0), fx * (1.0 - fy)),
            (xi(x0), yi(y0 + 1), (1.0 - fx) * fy),
            (xi(x0 + 1), yi(y0 + 1), fx * fy),
        ];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0f64;
        let mut acc = [0.0f64; 4];
        for (x, y, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            if let Some(alive) = &self.alive {
                if !alive[y * w + x] {
                    continue;
                }
            }
            let p = self.img.pixel(x, y);
            for k in 0..c.min(4) {
                acc[k] += wt * p[k] as f64;
            }
            total += wt;
        }
        if total <= 0.0 {
            // exact hit on a single live pixel has weight 1 on it; anything else is dead
            let (x, y) = (xi(px.round() as i64), yi(py.round() as i64));
            if self.alive.as_ref().is_none_or(|a| a[y * w + x]) {
                out.copy_from_slice(&self.img.pixel(x, y)[..c]);
                return true;
            }
            return false;
        }
        for k in 0..c.min(4) {
            out[k] = (acc[k] / total) as f32;
        }
        true
    }
}

/// One-off bilinear sample of `img` laid out by `proj`.
pub fn sample_bilinear(img: &Image, proj: &dyn Projection, px: f64, py: f64) -> Option<Vec<f32>> {
    let s = ImageSampler::new(img, proj);
    let mut out = vec![0.0; img.channels];
    s.sample(px, py, &mut out).then_some(out)
}

/// Re-renders `src` (laid out by `src_proj`) into `dst_proj`. Dead
/// destination pixels are zero.
pub fn resample(
    src_proj: &dyn Projection,
    src: &Image,
    dst_proj: &dyn Projection,
) -> Result<Image> {
    if src.dims() != (src_proj.width(), src_proj.height()) {
        return Err(Error::Dimensions {
            expected: (src_proj.width(), src_proj.height()),
            actual: src.dims(),
        });
    }
    let sampler = ImageSampler::new(src, src_proj);
    let (w, h, c) = (dst_proj.width(), dst_proj.height(), src.channels);
    let mut out = Image::new(w, h, c);
    out.data
        .par_chunks_mut(w * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let Some((d, _)) = dst_proj.pixel_to_dir(x, y) else {
                    continue;
                };
                let Some((sx, sy, _)) = src_proj.dir_to_pixel(d) else {
                    continue;
                };
                sampler.sample(sx, sy, &mut row[x * c..(x + 1) * c]);
            }
        });
    Ok(out)
}
