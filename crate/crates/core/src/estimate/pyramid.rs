//! Grayscale planes and chart-aware image pyramids.

use crate::projection::{ChartId, Projection};
use crate::raster::Image;

/// Pixel layout of one pyramid level: chart per pixel (`None` = dead) and
/// whether x wraps around.
#[derive(Debug, Clone)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub periodic: bool,
    pub chart: Vec<Option<ChartId>>,
}

impl Grid {
    pub fn from_projection(proj: &dyn Projection) -> Grid {
        let (w, h) = (proj.width(), proj.height());
        let chart = (0..w * h)
            .map(|i| proj.pixel_info(i % w, i / w).map(|p| p.chart))
            .collect();
        Grid {
            width: w,
            height: h,
            periodic: proj.x_period().is_some(),
            chart,
        }
    }

    pub fn live(&self, i: usize) -> bool {
        self.chart[i].is_some()
    }

    /// Index of `(x, y)` if it exists after wrapping; no clamping.
    pub fn index(&self, x: i64, y: i64) -> Option<usize> {
        if y < 0 || y >= self.height as i64 {
            return None;
        }
        let x = if self.periodic {
            x.rem_euclid(self.width as i64)
        } else if x < 0 || x >= self.width as i64 {
            return None;
        } else {
            x
        };
        Some(y as usize * self.width + x as usize)
    }

    /// Index of a neighbour in the same chart as pixel `i`.
    pub fn neighbour(&self, i: usize, dx: i64, dy: i64) -> Option<usize> {
        let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
        let j = self.index(x + dx, y + dy)?;
        (self.chart[j].is_some() && self.chart[j] == self.chart[i]).then_some(j)
    }

    /// Half-resolution grid; a coarse pixel is live when its 2×2 block is
    /// live and within one chart.
    pub fn downsample(&self) -> Grid {
        let (w, h) = (self.width / 2, self.height / 2);
        let chart = (0..w * h)
            .map(|i| {
                let (x, y) = (2 * (i % w), 2 * (i / w));
                let c = self.chart[y * self.width + x];
                let same = [(1, 0), (0, 1), (1, 1)]
                    .iter()
                    .all(|(dx, dy)| self.chart[(y + dy) * self.width + x + dx] == c);
                if same {
                    c
                } else {
                    None
                }
            })
            .collect();
        Grid {
            width: w,
            height: h,
            periodic: self.periodic,
            chart,
        }
    }
}

/// Single-channel float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn from_image(img: &Image) -> Plane {
        Plane {
            width: img.width,
            height: img.height,
            data: img.to_gray(),
        }
    }

    /// 2×2 box average over live fine pixels.
    pub fn downsample(&self, fine: &Grid) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = (2 * (i % w), 2 * (i / w));
                let (mut s, mut n) = (0.0f32, 0.0f32);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let j = (y + dy) * self.width + x + dx;
                    if fine.live(j) {
                        s += self.data[j];
                        n += 1.0;
                    }
                }
                if n > 0.0 {
                    s / n
                } else {
                    0.0
                }
            })
            .collect();
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    /// Bilinear sample with wrapped or clamped x and clamped y.
    pub fn sample(&self, grid: &Grid, px: f64, py: f64) -> f32 {
        let (w, h) = (self.width as i64, self.height as i64);
        let px = if grid.periodic {
            px
        } else {
            px.clamp(0.0, (w - 1) as f64)
        };
        let py = py.clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (px.floor(), py.floor());
        let (fx, fy) = ((px - x0) as f32, (py - y0) as f32);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let xi = |x: i64| if grid.periodic { x.rem_euclid(w) } else { x.clamp(0, w - 1) } as usize;
        let yi = |y: i64| y.clamp(0, h - 1) as usize;
        let at = |x: i64, y: i64| self.data[yi(y) * self.width + xi(x)];
        (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
            + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1))
    }
}

/// Number of usable levels: every level must halve exactly and stay at
/// least 8 pixels high.
pub fn usable_levels(width: usize, height: usize, wanted: usize) -> usize {
    let mut levels = 1;
    let (mut w, mut h) = (width, height);
    while levels < wanted && w % 2 == 0 && h % 2 == 0 && h / 2 >= 8 {
        w /= 2;
        h /= 2;
        levels += 1;
    }
    levels
}

/// Finest-first pyramid of both frames with their grids.
pub fn build_pyramid(
    a: &Image,
    b: &Image,
    proj: &dyn Projection,
    levels: usize,
) -> Vec<(Grid, Plane, Plane)> {
    let levels = usable_levels(proj.width(), proj.height(), levels);
    let mut out = vec![(
        Grid::from_projection(proj),
        Plane::from_image(a),
        Plane::from_image(b),
    )];
    for _ in 1..levels {
        let (g, pa, pb) = out.last().expect("non-empty");
        let next = (g.downsample(), pa.downsample(g), pb.downsample(g));
        out.push(next);
    }
    out
}

/// Bilinear 2× upsampling of a flow component, scaled to fine pixels.
pub fn upsample_flow(coarse: &[f64], cw: usize, ch: usize, fine: &Grid) -> Vec<f64> {
    let (fw, fh) = (fine.width, fine.height);
    (0..fw * fh)
        .map(|i| {
            let px = ((i % fw) as f64 + 0.5) / 2.0 - 0.5;
            let py = (((i / fw) as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (ch - 1) as f64);
            let (x0, y0) = (px.floor(), py.floor());
            let (fx, fy) = (px - x0, py - y0);
            let xi = |x: i64| {
                if fine.periodic {
                    x.rem_euclid(cw as i64) as usize
                } else {
                    x.clamp(0, cw as i64 - 1) as usize
                }
            };
            let y0 = y0 as usize;
            let y1 = (y0 + 1).min(ch - 1);
            let (x0, x1) = (xi(x0 as i64), xi(x0 as i64 + 1));
            let v = (1.0 - fy) * ((1.0 - fx) * coarse[y0 * cw + x0] + fx * coarse[y0 * cw + x1])
                + fy * ((1.0 - fx) * coarse[y1 * cw + x0] + fx * coarse[y1 * cw + x1]);
            2.0 * v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionSpec;

    #[test]
    fn level_count_respects_divisibility() {
        assert_eq!(usable_levels(512, 256, 3), 3);
        assert_eq!(usable_levels(512, 256, 10), 6);
        assert_eq!(usable_levels(34, 26, 4), 2);
        assert_eq!(usable_levels(34, 14, 4), 1);
    }

    #[test]
    fn coarse_charts_stay_inside_bands() {
        let proj = ProjectionSpec::tricyl(128).build().unwrap();
        let g = Grid::from_projection(proj.as_ref());
        let c = g.downsample();
        assert_eq!((c.width, c.height), (64, g.height / 2));
        assert!(c.chart.iter().all(|ch| ch.is_some()));
        let band = c.height / 3;
        assert_eq!(c.chart[(band - 1) * 64], Some(0));
        assert_eq!(c.chart[band * 64], Some(1));
    }

    #[test]
    fn upsampling_constant_doubles() {
        let proj = ProjectionSpec::equirect(32).build().unwrap();
        let g = Grid::from_projection(proj.as_ref());
        let up = upsample_flow(&vec![1.5; 16 * 8], 16, 8, &g);
        assert!(up.iter().all(|&u| (u - 3.0).abs() < 1e-12));
    }
}
