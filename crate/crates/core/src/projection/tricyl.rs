use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::{ChartId, PixelInfo, Projection, ProjectionSpec};
use crate::sphere::{angles_to_dir, dir_to_spherical, Direction3};

/// 90° vertical field of view per cylinder.
pub const DEFAULT_HALF_FOV: f64 = std::f64::consts::FRAC_PI_4;

/// Mercator height of latitude `phi`: `ln(tan φ + sec φ)`.
pub fn mercator_height(phi: f64) -> f64 {
    (phi.tan() + 1.0 / phi.cos()).ln()
}

/// Latitude of Mercator height `h`: `2·atan(e^h) − π/2`.
pub fn mercator_latitude(h: f64) -> f64 {
    2.0 * h.exp().atan() - FRAC_PI_2
}

/// Three Mercator cylinders whose axes are Y, X and Z, stacked top to bottom.
///
/// Band `b` covers rows `[b·H/3, (b+1)·H/3)`. Inside a band the horizontal
/// coordinate is the cylinder longitude over a full turn and the vertical
/// coordinate is the Mercator height, limited to `±half_fov` of latitude.
/// A direction is owned by the cylinder whose equator is closest.
#[derive(Debug, Clone)]
pub struct TriCylinder {
    width: usize,
    height: usize,
    band_height: usize,
    half_fov: f64,
    h_max: f64,
}

/// Cylinder axis per band.
const AXES: [Direction3; 3] = [Direction3::Y, Direction3::X, Direction3::Z];

impl TriCylinder {
    pub fn new(width: usize, height: usize, half_fov: f64) -> Self {
        TriCylinder {
            width,
            height,
            band_height: height / 3,
            half_fov,
            h_max: mercator_height(half_fov),
        }
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn half_fov(&self) -> f64 {
        self.half_fov
    }

    pub fn band_height(&self) -> usize {
        self.band_height
    }

    pub fn axis(band: ChartId) -> Direction3 {
        AXES[band as usize]
    }

    /// Band-local frame to world. Band 0 is the identity; the others are the
    /// two cyclic axis permutations, which take local +y to world +x and +z.
    pub fn to_world(band: ChartId, l: Direction3) -> Direction3 {
        match band {
            0 => l,
            1 => Direction3::from_unit(l.y, l.z, l.x),
            _ => Direction3::from_unit(l.z, l.x, l.y),
        }
    }

    pub fn to_local(band: ChartId, w: Direction3) -> Direction3 {
        match band {
            0 => w,
            1 => Direction3::from_unit(w.z, w.x, w.y),
            _ => Direction3::from_unit(w.y, w.z, w.x),
        }
    }

    /// Angular distance from `d` to the equator of each cylinder.
    pub fn equator_distances(d: Direction3) -> [f64; 3] {
        AXES.map(|a| d.dot(a).clamp(-1.0, 1.0).asin().abs())
    }

    /// Latitude of canvas row coordinate `py` in band `band`.
    pub fn band_latitude(&self, band: ChartId, py: f64) -> f64 {
        let yb = py - band as f64 * self.band_height as f64;
        let h = self.h_max - (yb + 0.5) / self.band_height as f64 * 2.0 * self.h_max;
        mercator_latitude(h)
    }

    fn band_of_row(&self, y: usize) -> ChartId {
        (3 * y / self.height).min(2) as ChartId
    }
}

impl Projection for TriCylinder {
    fn spec(&self) -> ProjectionSpec {
        ProjectionSpec::TriCylinder {
            width: self.width,
            height: self.height,
            half_fov: self.half_fov,
        }
    }

    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn chart_count(&self) -> usize {
        3
    }

    fn pixel_info(&self, x: usize, y: usize) -> Option<PixelInfo> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let chart = self.band_of_row(y);
        let d = self.chart_to_dir(chart, x as f64, y as f64)?;
        Some(PixelInfo {
            chart,
            owned: self.owner(d) == chart,
        })
    }

    fn chart_to_dir(&self, chart: ChartId, px: f64, py: f64) -> Option<Direction3> {
        if chart > 2 {
            return None;
        }
        let theta = (px + 0.5) / self.width as f64 * TAU - PI;
        let phi = self.band_latitude(chart, py);
        Some(Self::to_world(chart, angles_to_dir(theta, phi)))
    }

    fn dir_to_chart(&self, chart: ChartId, d: Direction3) -> Option<(f64, f64)> {
        if chart > 2 {
            return None;
        }
        let s = dir_to_spherical(Self::to_local(chart, d));
        if FRAC_PI_2 - s.phi.abs() < 1e-9 {
            // the cylinder's own axis has no finite Mercator height
            return None;
        }
        let h = mercator_height(s.phi);
        let px = (s.theta + PI) / TAU * self.width as f64 - 0.5;
        let bh = self.band_height as f64;
        let py = chart as f64 * bh + (self.h_max - h) / (2.0 * self.h_max) * bh - 0.5;
        Some((px, py))
    }

    fn owner(&self, d: Direction3) -> ChartId {
        let dist = Self::equator_distances(d);
        let mut best = 0;
        for b in 1..3 {
            // strict: ties go to the earlier band
            if dist[b] < dist[best] {
                best = b;
            }
        }
        best as ChartId
    }

    fn x_period(&self) -> Option<f64> {
        Some(self.width as f64)
    }
}
