use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;

use super::{advance_spherical, equirect_angles, FlowField, SATURATED, VALID};
use crate::error::Result;
use crate::projection::{ChartId, PixelInfo, Projection, ProjectionKind, ProjectionSpec};
use crate::sphere::{dir_to_spherical, wrap_delta_theta, Direction3};

/// Looks up a flow field at arbitrary directions.
///
/// Flow is interpolated bilinearly from the four surrounding pixels when all
/// of them are valid and belong to the owning chart; otherwise the nearest
/// such pixel is used.
pub struct FlowSampler<'a> {
    field: &'a FlowField,
    proj: Arc<dyn Projection>,
    info: Vec<Option<PixelInfo>>,
    u_period: Option<f64>,
}

impl<'a> FlowSampler<'a> {
    pub fn new(field: &'a FlowField) -> Result<Self> {
        field.check_dims()?;
        let proj = field.spec.build()?;
        let (w, h) = (proj.width(), proj.height());
        let info = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| proj.pixel_info(x, y))
            .collect();
        let u_period = match field.spec.kind() {
            ProjectionKind::Equirect => Some(TAU),
            _ => proj.x_period(),
        };
        Ok(FlowSampler {
            field,
            proj,
            info,
            u_period,
        })
    }

    pub fn projection(&self) -> &dyn Projection {
        self.proj.as_ref()
    }

    /// Source position of `d`, its chart and the flow there.
    pub fn flow_at(&self, d: Direction3) -> Option<(f64, f64, ChartId, f64, f64, u8)> {
        let (sx, sy, chart) = self.proj.dir_to_pixel(d)?;
        let (w, h) = (self.proj.width() as i64, self.proj.height() as i64);
        let period = self.proj.x_period().map(|p| p as i64);
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut taps = [(0usize, 0.0f64); 4];
        let mut n = 0;
        let mut all = true;
        for (dx, dy, wt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let x = match period {
                Some(p) => (x0 + dx).rem_euclid(p),
                None => x0 + dx,
            };
            let y = y0 + dy;
            let inside = x >= 0 && x < w && y >= 0 && y < h;
            let i = (y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize;
            let usable = inside
                && self.field.is_valid(i)
                && self.info[i].is_some_and(|inf| inf.chart == chart);
            if usable {
                taps[n] = (i, wt);
                n += 1;
            } else if wt > 0.0 {
                all = false;
            }
        }
        if n == 0 {
            return None;
        }
        let f = self.field;
        let (u, v, flags) = if all {
            let u_ref = f.u[taps[0].0];
            let (mut su, mut sv, mut tw) = (0.0, 0.0, 0.0);
            let mut flags = 0;
            for &(i, wt) in &taps[..n] {
                let mut u = f.u[i];
                if let Some(p) = self.u_period {
                    u = u_ref + wrap_period(u - u_ref, p);
                }
                su += wt * u;
                sv += wt * f.v[i];
                tw += wt;
                flags |= f.flags[i];
            }
            (su / tw, sv / tw, flags)
        } else {
            let &(i, _) = taps[..n]
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("n > 0");
            (f.u[i], f.v[i], f.flags[i])
        };
        Some((sx, sy, chart, u, v, flags))
    }

    /// Where the flow sampled at `d` points, and whether that target is saturated.
    pub fn endpoint(&self, d: Direction3) -> Option<(Direction3, bool)> {
        let (sx, sy, chart, u, v, flags) = self.flow_at(d)?;
        if self.field.is_equirect() {
            let s = dir_to_spherical(d);
            let (e, sat) = advance_spherical(s.theta, s.phi, u, v);
            Some((e, sat || flags & SATURATED != 0))
        } else {
            let e = self.proj.chart_to_dir(chart, sx + u, sy + v)?;
            Some((e, false))
        }
    }
}

/// `x` into (−p/2, p/2].
fn wrap_period(x: f64, p: f64) -> f64 {
    wrap_delta_theta(x / p * TAU) / TAU * p
}

/// Re-expresses `src` on the pixel grid and in the flow units of `dst_spec`.
///
/// Each destination pixel looks up the source flow at its own direction,
/// follows it to a target direction on the sphere, and measures that target
/// in its own chart. Longitudinal components take the short way around.
pub fn reproject_flow(src: &FlowField, dst_spec: ProjectionSpec) -> Result<FlowField> {
    let sampler = FlowSampler::new(src)?;
    let dst = dst_spec.build()?;
    let (w, h) = (dst.width(), dst.height());
    let dst_equirect = dst_spec.kind() == ProjectionKind::Equirect;
    let period = dst.x_period();
    let rows: Vec<Vec<(f64, f64, u8)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let Some((d, info)) = dst.pixel_to_dir(x, y) else {
                        return (0.0, 0.0, 0);
                    };
                    let Some((target, sat)) = sampler.endpoint(d) else {
                        return (0.0, 0.0, 0);
                    };
                    let flags = VALID | if sat { SATURATED } else { 0 };
                    if dst_equirect {
                        let (theta, phi) = equirect_angles(w, h, x as f64, y as f64);
                        let s = dir_to_spherical(target);
                        (wrap_delta_theta(s.theta - theta), s.phi - phi, flags)
                    } else {
                        match dst.dir_to_chart(info.chart, target) {
                            Some((px, py)) => {
                                let mut du = px - x as f64;
                                if let Some(p) = period {
                                    du = wrap_period(du, p);
                                }
                                (du, py - y as f64, flags)
                            }
                            None => (0.0, 0.0, 0),
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut out = FlowField::empty(dst_spec);
    for (i, (u, v, fl)) in rows.into_iter().flatten().enumerate() {
        out.u[i] = u;
        out.v[i] = v;
        out.flags[i] = fl;
    }
    Ok(out)
}
