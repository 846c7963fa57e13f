//! Carrying a pasted edit through an equirect video with backward flow.
//!
//! The edit lives in a premultiplied RGBA layer. Each new frame pulls the
//! layer from the previous frame at the position its backward flow points
//! to, so the edit follows whatever surface it was pasted on.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{endpoint_dir, FlowField};
use crate::projection::ProjectionSpec;
use crate::raster::Image;

/// Premultiplied RGBA overlay on an equirect canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct EditLayer {
    pub image: Image,
}

impl EditLayer {
    pub fn empty(width: usize, height: usize) -> Self {
        EditLayer {
            image: Image::new(width, height, 4),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn alpha(&self, x: usize, y: usize) -> f32 {
        self.image.pixel(x, y)[3]
    }

    /// Pastes `sprite` (RGB or RGBA) centred at `center`, wrapping in x.
    /// Pixels outside the canvas vertically are dropped.
    pub fn paste(&mut self, sprite: &Image, center: (f64, f64)) {
        let (w, h) = self.dims();
        let x0 = (center.0 - sprite.width as f64 / 2.0).round() as i64;
        let y0 = (center.1 - sprite.height as f64 / 2.0).round() as i64;
        for sy in 0..sprite.height {
            let y = y0 + sy as i64;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for sx in 0..sprite.width {
                let x = (x0 + sx as i64).rem_euclid(w as i64) as usize;
                let s = sprite.pixel(sx, sy);
                let a = if sprite.channels == 4 { s[3] } else { 1.0 };
                let rgb = |c: usize| s[c.min(sprite.channels - 1)];
                let d = self.image.pixel_mut(x, y as usize);
                for (c, v) in d.iter_mut().take(3).enumerate() {
                    *v = rgb(c) * a + *v * (1.0 - a);
                }
                d[3] = a + d[3] * (1.0 - a);
            }
        }
    }

    /// Bilinear sample at a subpixel position, x periodic, y clamped.
    fn sample(&self, px: f64, py: f64) -> [f32; 4] {
        let (w, h) = (self.image.width as i64, self.image.height as i64);
        let py = py.clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (px.floor(), py.floor());
        let (fx, fy) = ((px - x0) as f32, (py - y0) as f32);
        let mut out = [0.0; 4];
        for (dx, dy, wt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            if wt == 0.0 {
                continue;
            }
            let x = (x0 as i64 + dx).rem_euclid(w) as usize;
            let y = (y0 as i64 + dy).clamp(0, h - 1) as usize;
            for (o, v) in out.iter_mut().zip(self.image.pixel(x, y)) {
                *o += wt * v;
            }
        }
        out
    }

    /// Alpha-weighted centroid in pixel coordinates. The x mean is taken on
    /// the circle so a layer straddling the seam is not split in two.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (w, h) = self.dims();
        let (mut c, mut s, mut sy, mut total) = (0.0, 0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let a = self.alpha(x, y) as f64;
                if a <= 0.0 {
                    continue;
                }
                let ang = (x as f64 + 0.5) / w as f64 * TAU;
                c += a * ang.cos();
                s += a * ang.sin();
                sy += a * y as f64;
                total += a;
            }
        }
        if total <= 1e-9 {
            return None;
        }
        let ang = s.atan2(c).rem_euclid(TAU);
        Some((
            (ang / TAU * w as f64 - 0.5).rem_euclid(w as f64),
            sy / total,
        ))
    }
}

/// Layer of the next frame: every pixel looks up the current layer where
/// `backward` (next frame to current) sends it.
pub fn pull_layer(layer: &EditLayer, backward: &FlowField) -> Result<EditLayer> {
    backward.ensure_equirect()?;
    if backward.spec.dims() != layer.dims() {
        return Err(Error::Dimensions {
            expected: layer.dims(),
            actual: backward.spec.dims(),
        });
    }
    let proj = backward.spec.build()?;
    let (w, h) = layer.dims();
    let mut out = EditLayer::empty(w, h);
    out.image
        .data
        .par_chunks_mut(w * 4)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let i = y * w + x;
                if !backward.is_valid(i) {
                    continue;
                }
                let Some((d, _)) =
                    endpoint_dir(proj.as_ref(), x, y, (backward.u[i], backward.v[i]))
                else {
                    continue;
                };
                let Some((px, py, _)) = proj.dir_to_pixel(d) else {
                    continue;
                };
                row[x * 4..x * 4 + 4].copy_from_slice(&layer.sample(px, py));
            }
        });
    Ok(out)
}

/// `layer` over `frame`.
pub fn composite(frame: &Image, layer: &EditLayer) -> Result<Image> {
    if frame.dims() != layer.dims() {
        return Err(Error::Dimensions {
            expected: layer.dims(),
            actual: frame.dims(),
        });
    }
    let mut out = frame.clone();
    let c = frame.channels;
    for (px, l) in out.data.chunks_mut(c).zip(layer.image.data.chunks(4)) {
        for (k, v) in px.iter_mut().enumerate() {
            *v = l[k.min(2)] + *v * (1.0 - l[3]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PropagatedEdit {
    /// Every input frame; frames before the anchor are untouched.
    pub frames: Vec<Image>,
    /// Layer centroid per frame from the anchor on.
    pub centroids: Vec<Option<(f64, f64)>>,
}

/// Pastes `sprite` at `center` in frame `anchor` and carries it forward.
/// `backward[k]` is the flow from frame `anchor + k + 1` to `anchor + k`.
pub fn propagate_edit(
    frames: &[Image],
    sprite: &Image,
    anchor: usize,
    center: (f64, f64),
    backward: &[FlowField],
) -> Result<PropagatedEdit> {
    let first = frames.get(anchor).ok_or_else(|| {
        Error::Config(format!(
            "anchor frame {anchor} outside {} frames",
            frames.len()
        ))
    })?;
    let (w, h) = first.dims();
    ProjectionSpec::equirect(w).validate()?;
    let needed = frames.len() - anchor - 1;
    if backward.len() < needed {
        return Err(Error::Format(format!(
            "missing backward flow for transition {} -> {}",
            anchor + backward.len() + 1,
            anchor + backward.len()
        )));
    }
    let mut layer = EditLayer::empty(w, h);
    layer.paste(sprite, center);
    let mut out: Vec<Image> = frames[..anchor].to_vec();
    let mut centroids = Vec::with_capacity(needed + 1);
    for (k, frame) in frames[anchor..].iter().enumerate() {
        if k > 0 {
            layer = pull_layer(&layer, &backward[k - 1])?;
        }
        out.push(composite(frame, &layer)?);
        centroids.push(layer.centroid());
    }
    Ok(PropagatedEdit {
        frames: out,
        centroids,
    })
}
