use rayon::prelude::*;

use super::{PixelInfo, Projection};
use crate::metrics::neumaier_sum;
use crate::sphere::{Direction3, Vec3};

/// Per-pixel directions and chart membership of a projection.
#[derive(Debug, Clone)]
pub struct PixelMap {
    pub width: usize,
    pub height: usize,
    pub dirs: Vec<Option<Direction3>>,
    pub info: Vec<Option<PixelInfo>>,
}

impl PixelMap {
    pub fn build(proj: &dyn Projection) -> Self {
        let (w, h) = (proj.width(), proj.height());
        let rows: Vec<Vec<(Option<Direction3>, Option<PixelInfo>)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| match proj.pixel_to_dir(x, y) {
                        Some((d, info)) => (Some(d), Some(info)),
                        None => (None, None),
                    })
                    .collect()
            })
            .collect();
        let (dirs, info) = rows.into_iter().flatten().unzip();
        PixelMap {
            width: w,
            height: h,
            dirs,
            info,
        }
    }

    pub fn dir(&self, x: usize, y: usize) -> Option<Direction3> {
        self.dirs[y * self.width + x]
    }

    pub fn info(&self, x: usize, y: usize) -> Option<PixelInfo> {
        self.info[y * self.width + x]
    }
}

/// Solid angle (steradians) covered by each pixel, and which pixels count.
#[derive(Debug, Clone)]
pub struct WeightMap {
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f64>,
    pub owned: Vec<bool>,
}

impl WeightMap {
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    /// Sum of weights over owned pixels; ≈ 4π for a complete projection.
    pub fn owned_total(&self) -> f64 {
        neumaier_sum(
            self.weights
                .iter()
                .zip(&self.owned)
                .filter(|(_, &o)| o)
                .map(|(w, _)| *w),
        )
    }

    /// Weights with non-owned pixels zeroed, as used for loss and metric weighting.
    pub fn masked(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.owned)
            .map(|(w, &o)| if o { *w } else { 0.0 })
            .collect()
    }

    /// Weights divided by the mean owned weight, so an ideal equal-area
    /// projection would be 1 everywhere.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.owned.iter().filter(|&&o| o).count().max(1);
        let mean = self.owned_total() / n as f64;
        self.weights.iter().map(|w| w / mean).collect()
    }
}

/// Area of each pixel from the cross product of the displacements to its
/// right and lower neighbours on the unit sphere. Neighbours are taken in
/// the pixel's own chart, extended past the chart edge where needed.
pub fn solid_angle_weights(proj: &dyn Projection) -> WeightMap {
    let (w, h) = (proj.width(), proj.height());
    let rows: Vec<Vec<(f64, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let Some(info) = proj.pixel_info(x, y) else {
                        return (0.0, false);
                    };
                    let (fx, fy) = (x as f64, y as f64);
                    let c = info.chart;
                    let area = match (
                        proj.chart_to_dir(c, fx, fy),
                        proj.chart_to_dir(c, fx + 1.0, fy),
                        proj.chart_to_dir(c, fx, fy + 1.0),
                    ) {
                        (Some(pc), Some(pr), Some(pd)) => {
                            let pc = Vec3::from(pc);
                            let dr = Vec3::from(pr) - pc;
                            let dd = Vec3::from(pd) - pc;
                            let cx = dr.1 * dd.2 - dr.2 * dd.1;
                            let cy = dr.2 * dd.0 - dr.0 * dd.2;
                            let cz = dr.0 * dd.1 - dr.1 * dd.0;
                            (cx * cx + cy * cy + cz * cz).sqrt()
                        }
                        _ => 0.0,
                    };
                    (area, info.owned)
                })
                .collect()
        })
        .collect();
    let (weights, owned) = rows.into_iter().flatten().unzip();
    WeightMap {
        width: w,
        height: h,
        weights,
        owned,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionSpec;
    use std::f64::consts::PI;

    #[test]
    fn equirect_weights_follow_cosine_of_latitude() {
        let proj = ProjectionSpec::equirect(512).build().unwrap();
        let wm = solid_angle_weights(proj.as_ref());
        let (dt, dp) = (2.0 * PI / 512.0, PI / 256.0);
        let equator = wm.weight(0, 127);
        let pole = wm.weight(0, 0);
        assert!(equator > pole);
        for y in [0usize, 5, 40, 127, 200, 255] {
            let phi = PI / 2.0 - (y as f64 + 0.5) * dp;
            let analytic = phi.cos() * dt * dp;
            let ratio = wm.weight(3, y) / analytic;
            assert!((ratio - 1.0).abs() < 0.05, "row {y}: ratio {ratio}");
        }
        // longitude invariance
        for y in 0..256 {
            let row = &wm.weights[y * 512..(y + 1) * 512];
            assert!(row
                .iter()
                .all(|&v| (v - row[0]).abs() <= 1e-12 * row[0].max(1e-300)));
        }
    }

    #[test]
    fn weights_nonnegative_and_sum_to_sphere() {
        for spec in [
            ProjectionSpec::equivalent(crate::projection::ProjectionKind::Equirect, 512),
            ProjectionSpec::equivalent(crate::projection::ProjectionKind::TriCylinder, 512),
            ProjectionSpec::equivalent(crate::projection::ProjectionKind::CubePadding, 512),
        ] {
            let wm = solid_angle_weights(spec.build().unwrap().as_ref());
            assert!(wm.weights.iter().all(|&w| w >= 0.0));
            let total = wm.owned_total();
            assert!((total / (4.0 * PI) - 1.0).abs() < 0.01, "{spec}: {total}");
        }
    }
}
