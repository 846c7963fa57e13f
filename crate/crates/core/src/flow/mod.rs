//! Dense flow fields tied to a projection.
//!
//! Equirect fields store spherical deltas `(Δθ, Δφ)` in radians; chart
//! projections store canvas pixel displacements. Both come with a
//! per-pixel flag byte.

mod color;
mod io;
mod reproject;
mod warp;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::projection::{Projection, ProjectionKind, ProjectionSpec};
use crate::sphere::{angles_to_dir, wrap_delta_theta, Direction3};

pub use color::{flow_to_color, ColorWheel};
pub use io::{read_flo, read_flow, write_flo, write_flow, FLOW_MAGIC};
pub use reproject::{reproject_flow, FlowSampler};
pub use warp::warp_image;

/// Flag bit: the pixel carries a flow vector.
pub const VALID: u8 = 1;
/// Flag bit: the target latitude ran past a pole and was clamped.
pub const SATURATED: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub spec: ProjectionSpec,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub flags: Vec<u8>,
}

impl FlowField {
    /// All pixels invalid.
    pub fn empty(spec: ProjectionSpec) -> Self {
        let n = spec.width() * spec.height();
        FlowField {
            spec,
            u: vec![0.0; n],
            v: vec![0.0; n],
            flags: vec![0; n],
        }
    }

    /// Zero flow on every live pixel of the projection.
    pub fn zeros(proj: &dyn Projection) -> Self {
        let mut f = FlowField::empty(proj.spec());
        for y in 0..proj.height() {
            for x in 0..proj.width() {
                if proj.pixel_info(x, y).is_some() {
                    f.flags[y * proj.width() + x] = VALID;
                }
            }
        }
        f
    }

    pub fn width(&self) -> usize {
        self.spec.width()
    }

    pub fn height(&self) -> usize {
        self.spec.height()
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_equirect(&self) -> bool {
        self.spec.kind() == ProjectionKind::Equirect
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.flags[i] & VALID != 0
    }

    pub fn at(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width() + x;
        self.is_valid(i).then(|| (self.u[i], self.v[i]))
    }

    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64, flags: u8) {
        let i = y * self.width() + x;
        self.u[i] = u;
        self.v[i] = v;
        self.flags[i] = flags;
    }

    pub fn valid_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_valid(i)).count()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.width() * self.height();
        if self.u.len() != n || self.v.len() != n || self.flags.len() != n {
            return Err(Error::Dimensions {
                expected: self.spec.dims(),
                actual: (self.u.len(), 1),
            });
        }
        Ok(())
    }

    pub fn ensure_same_spec(&self, other: &FlowField) -> Result<()> {
        if !self.spec.same_layout(&other.spec) {
            return Err(Error::SpecMismatch(format!(
                "{} vs {}",
                self.spec, other.spec
            )));
        }
        Ok(())
    }

    pub fn ensure_equirect(&self) -> Result<()> {
        if !self.is_equirect() {
            return Err(Error::SpecMismatch(format!(
                "operation needs an equirect field, got {}",
                self.spec
            )));
        }
        Ok(())
    }

    /// Uniformly scaled copy (flags unchanged).
    pub fn scaled(&self, s: f64) -> FlowField {
        FlowField {
            spec: self.spec,
            u: self.u.iter().map(|u| u * s).collect(),
            v: self.v.iter().map(|v| v * s).collect(),
            flags: self.flags.clone(),
        }
    }

    /// Equirect flow in pixel units `(du, dv)` with image-down positive `dv`.
    pub fn equirect_to_pixels(&self, u: f64, v: f64) -> (f64, f64) {
        let (w, h) = self.spec.dims();
        (u * w as f64 / TAU, -v * h as f64 / PI)
    }

    pub fn equirect_from_pixels(spec: &ProjectionSpec, du: f64, dv: f64) -> (f64, f64) {
        let (w, h) = spec.dims();
        (du * TAU / w as f64, -dv * PI / h as f64)
    }
}

/// Longitude and latitude of an equirect pixel center.
pub fn equirect_angles(width: usize, height: usize, x: f64, y: f64) -> (f64, f64) {
    (
        (x + 0.5) / width as f64 * TAU - PI,
        FRAC_PI_2 - (y + 0.5) / height as f64 * PI,
    )
}

/// Equirect target of `(Δθ, Δφ)` from `(θ, φ)`: longitude first, then
/// latitude, clamped at the poles. Returns the direction and whether it clamped.
pub fn advance_spherical(theta: f64, phi: f64, du: f64, dv: f64) -> (Direction3, bool) {
    let t = theta + wrap_delta_theta(du);
    let p = phi + dv;
    let clamped = p.clamp(-FRAC_PI_2, FRAC_PI_2);
    (angles_to_dir(t, clamped), clamped != p)
}

/// Direction the flow at pixel `(x, y)` points to.
///
/// For equirect fields the saturation flag reports a pole clamp; for charts
/// `None` means the target left the chart's extended domain.
pub fn endpoint_dir(
    proj: &dyn Projection,
    x: usize,
    y: usize,
    uv: (f64, f64),
) -> Option<(Direction3, bool)> {
    if proj.spec().kind() == ProjectionKind::Equirect {
        let (theta, phi) = equirect_angles(proj.width(), proj.height(), x as f64, y as f64);
        return Some(advance_spherical(theta, phi, uv.0, uv.1));
    }
    let info = proj.pixel_info(x, y)?;
    let d = proj.chart_to_dir(info.chart, x as f64 + uv.0, y as f64 + uv.1)?;
    Some((d, false))
}
