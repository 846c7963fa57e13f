use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::{ChartId, PixelInfo, Projection, ProjectionSpec};
use crate::sphere::{angles_to_dir, dir_to_spherical, Direction3};

/// Longitude and latitude mapped linearly to x and y; one chart, wraps in x.
#[derive(Debug, Clone)]
pub struct Equirect {
    width: usize,
    height: usize,
}

impl Equirect {
    pub fn new(width: usize, height: usize) -> Self {
        Equirect { width, height }
    }

    pub fn theta_of(&self, px: f64) -> f64 {
        (px + 0.5) / self.width as f64 * TAU - PI
    }

    pub fn phi_of(&self, py: f64) -> f64 {
        FRAC_PI_2 - (py + 0.5) / self.height as f64 * PI
    }

    pub fn x_of(&self, theta: f64) -> f64 {
        (theta + PI) / TAU * self.width as f64 - 0.5
    }

    pub fn y_of(&self, phi: f64) -> f64 {
        (FRAC_PI_2 - phi) / PI * self.height as f64 - 0.5
    }

    /// Radians per pixel, horizontally and vertically.
    pub fn pixel_angles(&self) -> (f64, f64) {
        (TAU / self.width as f64, PI / self.height as f64)
    }
}

impl Projection for Equirect {
    fn spec(&self) -> ProjectionSpec {
        ProjectionSpec::Equirect {
            width: self.width,
            height: self.height,
        }
    }

    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn chart_count(&self) -> usize {
        1
    }

    fn pixel_info(&self, x: usize, y: usize) -> Option<PixelInfo> {
        (x < self.width && y < self.height).then_some(PixelInfo {
            chart: 0,
            owned: true,
        })
    }

    fn chart_to_dir(&self, _chart: ChartId, px: f64, py: f64) -> Option<Direction3> {
        // past-the-pole latitudes continue over the pole
        Some(angles_to_dir(self.theta_of(px), self.phi_of(py)))
    }

    fn dir_to_chart(&self, _chart: ChartId, d: Direction3) -> Option<(f64, f64)> {
        let s = dir_to_spherical(d);
        Some((self.x_of(s.theta), self.y_of(s.phi)))
    }

    fn owner(&self, _d: Direction3) -> ChartId {
        0
    }

    fn x_period(&self) -> Option<f64> {
        Some(self.width as f64)
    }
}
