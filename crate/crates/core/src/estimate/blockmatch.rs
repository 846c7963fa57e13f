use rayon::prelude::*;

use super::pyramid::{build_pyramid, Grid, Plane};
use super::{to_flow_field, EstimateInput, EstimatorConfig, FlowEstimator};
use crate::error::Result;
use crate::flow::FlowField;
use crate::projection::ProjectionKind;

/// Coarse-to-fine block matching with a sum-of-absolute-differences cost.
///
/// Each level searches integer displacements within a disc of `radius`
/// around the upsampled coarser estimate, so the final magnitude stays
/// below `radius · 2^levels`. Ties go to the smaller displacement, then to
/// the earlier candidate in scanline order.
#[derive(Debug, Clone)]
pub struct BlockMatch {
    pub levels: usize,
    pub radius: usize,
    pub block: usize,
    pub subpixel: bool,
    /// Fraction of equirect rows at each pole that are not matched but
    /// copied from the nearest matched row.
    pub pole_fraction: f64,
}

impl BlockMatch {
    pub fn from_config(cfg: &EstimatorConfig) -> Self {
        BlockMatch {
            levels: cfg.levels,
            radius: cfg.radius,
            block: cfg.block,
            subpixel: cfg.subpixel,
            pole_fraction: cfg.pole_fraction,
        }
    }

    fn offsets(&self) -> Vec<(i64, i64)> {
        let r = self.radius as i64;
        let mut v = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    v.push((dx, dy));
                }
            }
        }
        v
    }

    /// Mean absolute difference between the block around `i` in `a` and
    /// the block displaced by `(cx, cy)` in `b`.
    fn cost(
        &self,
        grid: &Grid,
        solid: &[bool],
        a: &Plane,
        b: &Plane,
        i: usize,
        (cx, cy): (i64, i64),
    ) -> f64 {
        let k = (self.block / 2) as i64;
        let (w, h) = (grid.width as i64, grid.height as i64);
        let (x, y) = ((i % grid.width) as i64, (i / grid.width) as i64);
        let (tx, ty) = (x + cx, y + cy);
        if solid[i] && tx >= 0 && tx < w && ty >= 0 && ty < h && solid[(ty * w + tx) as usize] {
            let side = 2 * k as usize + 1;
            let mut sum = 0.0f32;
            for by in -k..=k {
                let ra = ((y + by) * w + x - k) as usize;
                let rb = ((y + cy + by) * w + x + cx - k) as usize;
                let row: f32 = a.data[ra..ra + side]
                    .iter()
                    .zip(&b.data[rb..rb + side])
                    .map(|(p, q)| (p - q).abs())
                    .sum();
                sum += row;
            }
            return sum as f64 / (side * side) as f64;
        }
        let (mut sum, mut n) = (0.0f64, 0usize);
        for by in -k..=k {
            for bx in -k..=k {
                let Some(ia) = grid.index(x + bx, y + by) else {
                    continue;
                };
                let Some(ib) = grid.index(x + bx + cx, y + by + cy) else {
                    continue;
                };
                if grid.live(ia) && grid.live(ib) {
                    sum += (a.data[ia] - b.data[ib]).abs() as f64;
                    n += 1;
                }
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            sum / n as f64
        }
    }

    /// Pixels whose whole block lies inside the canvas on live pixels.
    fn solid_blocks(&self, grid: &Grid) -> Vec<bool> {
        let (w, h, k) = (grid.width, grid.height, self.block / 2);
        // integral image of dead pixels
        let mut dead = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                dead[(y + 1) * (w + 1) + x + 1] =
                    dead[y * (w + 1) + x + 1] + dead[(y + 1) * (w + 1) + x] - dead[y * (w + 1) + x]
                        + !grid.live(y * w + x) as u32;
            }
        }
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if x < k || y < k || x + k >= w || y + k >= h {
                    return false;
                }
                let (x0, y0, x1, y1) = (x - k, y - k, x + k + 1, y + k + 1);
                dead[y1 * (w + 1) + x1] + dead[y0 * (w + 1) + x0]
                    == dead[y0 * (w + 1) + x1] + dead[y1 * (w + 1) + x0]
            })
            .collect()
    }

    fn excluded_rows(&self, kind: ProjectionKind, h: usize) -> usize {
        if kind == ProjectionKind::Equirect {
            ((self.pole_fraction * h as f64).ceil() as usize).min(h.saturating_sub(1) / 2)
        } else {
            0
        }
    }

    fn match_level(
        &self,
        grid: &Grid,
        a: &Plane,
        b: &Plane,
        init: &[(i64, i64)],
        skip: usize,
        refine: bool,
    ) -> Vec<(f64, f64)> {
        let offsets = self.offsets();
        let solid = self.solid_blocks(grid);
        let (w, h) = (grid.width, grid.height);
        (0..w * h)
            .into_par_iter()
            .map(|i| {
                let y = i / w;
                if !grid.live(i) || y < skip || y >= h - skip {
                    return (init[i].0 as f64, init[i].1 as f64);
                }
                let (px, py) = init[i];
                let mut best = (f64::INFINITY, i64::MAX, px, py);
                for &(dx, dy) in &offsets {
                    let (cx, cy) = (px + dx, py + dy);
                    let c = self.cost(grid, &solid, a, b, i, (cx, cy));
                    let mag = cx * cx + cy * cy;
                    // strict comparison keeps the earliest candidate on full ties
                    if c < best.0 || (c == best.0 && mag < best.1) {
                        best = (c, mag, cx, cy);
                    }
                }
                let (c0, _, bx, by) = best;
                let (mut fx, mut fy) = (bx as f64, by as f64);
                if refine && c0 > 0.0 && c0.is_finite() {
                    let vertex = |lo: f64, hi: f64| {
                        let den = lo - 2.0 * c0 + hi;
                        if den > 0.0 && lo.is_finite() && hi.is_finite() {
                            ((lo - hi) / (2.0 * den)).clamp(-0.5, 0.5)
                        } else {
                            0.0
                        }
                    };
                    fx += vertex(
                        self.cost(grid, &solid, a, b, i, (bx - 1, by)),
                        self.cost(grid, &solid, a, b, i, (bx + 1, by)),
                    );
                    fy += vertex(
                        self.cost(grid, &solid, a, b, i, (bx, by - 1)),
                        self.cost(grid, &solid, a, b, i, (bx, by + 1)),
                    );
                }
                (fx, fy)
            })
            .collect()
    }
}

/// Copies the nearest matched row into `skip` rows at the top and bottom.
fn fill_pole_rows(flow: &mut [(f64, f64)], w: usize, h: usize, skip: usize) {
    if skip == 0 {
        return;
    }
    for y in 0..skip {
        flow.copy_within(skip * w..(skip + 1) * w, y * w);
        let src = (h - skip - 1) * w;
        flow.copy_within(src..src + w, (h - 1 - y) * w);
    }
}

impl FlowEstimator for BlockMatch {
    fn name(&self) -> &'static str {
        "blockmatch"
    }

    fn estimate(&self, input: &EstimateInput) -> Result<FlowField> {
        input.check()?;
        let kind = input.proj.spec().kind();
        let pyramid = build_pyramid(input.frame_a, input.frame_b, input.proj, self.levels);
        let mut flow: Vec<(f64, f64)> = Vec::new();
        let mut coarse_w = 0;
        for (level, (grid, a, b)) in pyramid.iter().enumerate().rev() {
            let (w, h) = (grid.width, grid.height);
            let init: Vec<(i64, i64)> = if flow.is_empty() {
                vec![(0, 0); w * h]
            } else {
                // levels halve exactly, so every fine pixel has a coarse parent
                (0..w * h)
                    .map(|i| {
                        let (u, v) = flow[(i / w / 2) * coarse_w + (i % w) / 2];
                        (2 * u.round() as i64, 2 * v.round() as i64)
                    })
                    .collect()
            };
            let skip = self.excluded_rows(kind, h);
            flow = self.match_level(grid, a, b, &init, skip, self.subpixel && level == 0);
            fill_pole_rows(&mut flow, w, h, skip);
            coarse_w = w;
        }
        let (u, v): (Vec<f64>, Vec<f64>) = flow.into_iter().unzip();
        Ok(to_flow_field(input.proj, &u, &v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionSpec;
    use crate::raster::Image;
    use crate::synth::value_noise;
    use nalgebra::Vector3;

    fn texture(w: usize, h: usize, shift: usize) -> Image {
        Image::from_fn(w, h, 1, |x, y, p| {
            let xs = (x + w - shift) % w;
            // periodic in x so an integer shift is an exact rotation
            let t = xs as f64 / w as f64 * std::f64::consts::TAU;
            let q = Vector3::new(6.0 * t.cos(), y as f64 * 0.15, 6.0 * t.sin());
            p[0] = value_noise(q, 3) as f32;
        })
    }

    fn bm() -> BlockMatch {
        BlockMatch::from_config(&EstimatorConfig::default())
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        for spec in [
            ProjectionSpec::equirect(128),
            ProjectionSpec::tricyl(128),
            ProjectionSpec::cubepad(32),
        ] {
            let proj = spec.build().unwrap();
            let (w, h) = spec.dims();
            let img = Image::from_fn(w, h, 1, |x, y, p| {
                p[0] = ((x * 7 + y * 13) % 17) as f32 / 17.0
            });
            let f = bm()
                .estimate(&EstimateInput::new(&img, &img, proj.as_ref()))
                .unwrap();
            assert!(f.u.iter().chain(&f.v).all(|&c| c == 0.0), "{spec}");
        }
    }

    #[test]
    fn recovers_periodic_three_pixel_shift() {
        let spec = ProjectionSpec::equirect(256);
        let proj = spec.build().unwrap();
        let (a, b) = (texture(256, 128, 0), texture(256, 128, 3));
        let f = bm()
            .estimate(&EstimateInput::new(&a, &b, proj.as_ref()))
            .unwrap();
        let mut hits = 0;
        let mut total = 0;
        for y in 7..121 {
            for x in 0..256 {
                let gx = a.pixel((x + 1) % 256, y)[0] - a.pixel((x + 255) % 256, y)[0];
                if gx.abs() < 0.01 {
                    continue;
                }
                total += 1;
                let (du, dv) = f.equirect_to_pixels(f.u[y * 256 + x], f.v[y * 256 + x]);
                if (du - 3.0).abs() < 1e-9 && dv.abs() < 1e-9 {
                    hits += 1;
                }
            }
        }
        assert!(hits as f64 > 0.95 * total as f64, "{hits}/{total}");
    }

    #[test]
    fn magnitude_bounded_by_search_range() {
        let spec = ProjectionSpec::cubepad(32);
        let proj = spec.build().unwrap();
        let (w, h) = spec.dims();
        let a = Image::from_fn(w, h, 1, |x, y, p| {
            p[0] = ((x * 31 + y * 17) % 23) as f32 / 23.0
        });
        let b = Image::from_fn(w, h, 1, |x, y, p| {
            p[0] = ((x * 13 + y * 29) % 19) as f32 / 19.0
        });
        let est = BlockMatch {
            levels: 2,
            radius: 3,
            ..bm()
        };
        let f = est
            .estimate(&EstimateInput::new(&a, &b, proj.as_ref()))
            .unwrap();
        for i in 0..f.len() {
            assert!(f.u[i].hypot(f.v[i]) <= 3.0 * 4.0);
        }
    }

    #[test]
    fn pole_rows_are_copied() {
        let mut flow: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, 0.0)).collect();
        fill_pole_rows(&mut flow, 4, 10, 2);
        assert_eq!(flow[0].0, 8.0);
        assert_eq!(flow[5].0, 9.0);
        assert_eq!(flow[39].0, 31.0);
    }
}
